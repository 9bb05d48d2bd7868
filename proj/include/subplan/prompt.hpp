#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "subplan/grammar.hpp"

namespace subplan {

struct TrainingPair {
  std::string instruction;
  SubgoalSequence plan;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// A training pair tagged with its fine-grained task type.
struct PoolEntry {
  TrainingPair pair;
  std::string task_type;
};

inline constexpr std::string_view kPromptEquals = " = ";
inline constexpr std::string_view kPromptSeparator = ", ";

/// "x1 = y1, x2 = y2, ..., q = " over raw (source, target) strings.
std::string render_prompt(std::span<const std::pair<std::string, std::string>> examples,
                          std::string_view query);

/// "t1 = s(g1), ..., tn = s(gn), query = ".
std::string build_prompt_forward(std::span<const TrainingPair> pairs, std::string_view query);
/// "s(g1) = t1, ..., s(gn) = tn, s(h) = ".
std::string build_prompt_reverse(std::span<const TrainingPair> pairs,
                                 const SubgoalSequence& hypothesis);

/// Training-pair file: one "instruction<TAB>serialized-plan" record per line,
/// '#' comments allowed. Plans are parsed against the catalog.
std::vector<TrainingPair> parse_training_pairs(std::string_view text, const Catalog& catalog);
std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& path,
                                              const Catalog& catalog);
std::string format_training_pairs(std::span<const TrainingPair> pairs);

}  // namespace subplan
