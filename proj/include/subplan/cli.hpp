#pragma once

// Command-line driver: run configuration, run directories and the five
// subcommands (generate-benchmark, predict, feedback-train, eval, sweep).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "subplan/benchmark.hpp"
#include "subplan/planner.hpp"
#include "subplan/ranker.hpp"

namespace subplan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Invalid or missing configuration; `field` is the dotted key at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  std::filesystem::path catalog;
  std::filesystem::path scenes;
  std::filesystem::path tasks;
  std::optional<std::filesystem::path> train_pairs;
  std::filesystem::path output_dir = "run";
  std::size_t threads = 0;

  ModelSpec model;
  BeamConfig beam;
  RankCriterion criterion;

  std::size_t prompt_n = 44;
  std::uint64_t prompt_seed = 0;
  std::string prompt_split = "train";

  std::string feedback_split = "feedback";
  std::optional<std::size_t> feedback_budget;  // instructions; all when absent
  TrainConfig train;
  std::string featurizer = "hashed:4096:cross";
  std::size_t i_thresh = 10;

  std::string eval_split = "eval";
  std::size_t k = 10;
  std::optional<std::size_t> eval_limit;
  std::optional<std::filesystem::path> params;

  std::vector<std::size_t> sweep_n{0, 11, 22, 44};
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};

  GeneratorConfig generate;

  /// The configuration as parsed, overrides applied; hashed for manifests.
  nlohmann::json raw;
};

/// Parses a configuration object. Relative paths resolve against
/// `base_dir`. Unknown keys, wrong types and out-of-range values throw
/// ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// "fnv1a64:<16 hex digits>" over the canonical dump of `raw`.
std::string config_hash(const nlohmann::json& raw);

/// Entry point shared by the executable and the tests. Returns the exit
/// code: 0 success, 1 runtime failure, 2 configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subplan
