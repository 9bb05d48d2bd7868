#pragma once

// Scene/task collections on disk and the seeded benchmark generator.
//
// Files (JSON Lines, one record per line):
//   scenes.jsonl  {"id", "room", "width", "height",
//                  "objects": [{"category", "cell": [x, y], "flags": [...], "in": idx|null}]}
//   tasks.jsonl   {"id", "scene", "type", "split", "instruction",
//                  "conditions": ["apple heated in:diningtable", ...],
//                  "oracle_plan": "pick up apple, ...", "ambiguous": false}
//   train_pairs.tsv  instruction<TAB>plan for the "train" split

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "subplan/env.hpp"
#include "subplan/prompt.hpp"

namespace subplan {

class Benchmark {
 public:
  Benchmark() = default;
  Benchmark(std::vector<Scene> scenes, std::vector<TaskSpec> tasks);

  const std::vector<Scene>& scenes() const noexcept { return scenes_; }
  const std::vector<TaskSpec>& tasks() const noexcept { return tasks_; }
  /// Throws std::out_of_range for unknown ids.
  const Scene& scene(std::string_view id) const;
  std::vector<const TaskSpec*> split(std::string_view name) const;
  /// (instruction, oracle plan) pairs of a split; pool() adds task types.
  std::vector<TrainingPair> training_pairs(std::string_view split_name) const;
  std::vector<PoolEntry> pool(std::string_view split_name) const;

  /// Runs Environment::validate_task on every task.
  void validate(const Environment& env) const;

 private:
  std::vector<Scene> scenes_;
  std::vector<TaskSpec> tasks_;
  std::unordered_map<std::string, std::size_t> scene_index_;
};

std::string scene_to_json_line(const Scene& scene);
Scene scene_from_json_line(std::string_view line);
std::string task_to_json_line(const TaskSpec& task);
TaskSpec task_from_json_line(std::string_view line, const Catalog& catalog);

Benchmark load_benchmark(const std::filesystem::path& dir, const Catalog& catalog);
Benchmark load_benchmark(const std::filesystem::path& scenes_path,
                         const std::filesystem::path& tasks_path, const Catalog& catalog);
void save_benchmark(const std::filesystem::path& dir, const Benchmark& benchmark);

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t train_per_type = 4;
  std::size_t feedback_per_type = 40;
  std::size_t eval_per_type = 10;
  /// Probability that an eligible slot is described ambiguously.
  double ambiguity_rate = 0.6;
};

/// The fine-grained task types the generator produces, in a fixed order.
const std::vector<std::string>& task_types();

/// Builds one scene per task; every oracle plan is validated against the
/// environment before the benchmark is returned.
Benchmark generate_benchmark(const Environment& env, const GeneratorConfig& config);

}  // namespace subplan
