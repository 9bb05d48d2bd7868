#pragma once

// Metrics and experiment drivers: recall, criterion comparison, confusion
// matrices, policy rows and prompt-size ablations.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subplan/benchmark.hpp"
#include "subplan/planner.hpp"
#include "subplan/ranker.hpp"

namespace subplan {

struct EvalRecord {
  std::string task_id;
  std::string instruction;
  SubgoalSequence gold;
  std::vector<Hypothesis> predicted;  // ranked, best first
  std::optional<Episode> episode;
};

/// Runs planner.propose() on every task, in order. Tasks need an oracle
/// plan (the gold); std::invalid_argument otherwise.
std::vector<EvalRecord> predict_records(const Planner& planner,
                                        std::span<const TaskSpec* const> tasks,
                                        std::size_t threads = 0);

/// Fraction of records whose gold plan is among the first k predictions
/// (whole-sequence exact match). 0 for an empty record set.
double topk_recall(std::span<const EvalRecord> records, std::size_t k);

struct CriteriaTable {
  std::vector<std::string> criteria;
  std::vector<double> top1;
  std::size_t records = 0;

  std::string to_tsv() const;
};

/// Top-1 recall of each criterion over the same hypothesis sets. Throws
/// MissingScore if a criterion needs a reverse score that is absent.
CriteriaTable compare_criteria(std::span<const EvalRecord> records,
                               std::span<const RankCriterion> criteria);

enum class ConfusionSlot { Object, Action };

inline constexpr std::string_view kNullLabel = "<null>";

struct ConfusionEntry {
  std::string label;
  std::size_t count = 0;
};

struct ConfusionMatrix {
  std::vector<std::string> labels;          // last label is kNullLabel
  std::vector<std::vector<std::size_t>> counts;  // [gold][predicted]

  std::size_t index(std::string_view label) const;
  std::size_t at(std::string_view gold, std::string_view predicted) const;
  std::size_t row_sum(std::string_view gold) const;
  std::string to_tsv() const;

  /// Per gold label with at least one error, the wrongly predicted labels by
  /// descending count (ties by label). Gold rows are ordered by total errors.
  std::vector<std::pair<std::string, std::vector<ConfusionEntry>>> most_confused() const;
  std::string most_confused_text() const;
};

/// Positional alignment of gold steps against the top-1 prediction; a step
/// missing on either side is counted against kNullLabel. Object labels are
/// catalog ids, action labels are action names.
ConfusionMatrix confusion(std::span<const EvalRecord> records, ConfusionSlot slot,
                          const Catalog& catalog);

/// One policy row of the evaluation report.
struct PolicyRow {
  std::string name;
  SuccessRates rates;
  std::vector<Episode> episodes;
};

/// Rolls out each record's ranked candidates (the oracle plan alone when
/// `oracle` is set). Records and tasks align by index.
PolicyRow policy_row(std::string name, std::span<const EvalRecord> records,
                     std::span<const EpisodeTask> tasks, const RolloutContext& ctx, bool oracle,
                     std::size_t threads = 0);

struct SweepConfig {
  std::vector<std::size_t> n_values;
  std::vector<std::uint64_t> seeds;
  std::size_t k = 10;
  ModelSpec model;
  PlannerConfig planner;
  std::size_t threads = 0;
};

struct SweepRow {
  std::size_t n = 0;
  std::size_t runs = 0;  // seeds that decoded without overflowing the context
  double top1_mean = 0.0;
  double top1_stddev = 0.0;
  double topk_mean = 0.0;
  double topk_stddev = 0.0;
  std::string status = "ok";  // "ok", "context-overflow" or "partial-overflow"
};

struct SweepTable {
  std::size_t k = 10;
  std::vector<SweepRow> rows;

  std::string to_tsv() const;
};

/// For every N and seed, samples N prompt examples from `pool`, fits the
/// configured model and decodes `eval_tasks`. Reports the mean and the
/// population standard deviation of top-1 and top-k recall over seeds.
/// N = 0 decodes from the bare query. Throws InsufficientPool when N
/// exceeds the pool.
SweepTable ablation_sweep(std::span<const PoolEntry> pool,
                          std::span<const TaskSpec* const> eval_tasks, const Environment& env,
                          const SweepConfig& config);

/// Mean and population standard deviation.
std::pair<double, double> mean_stddev(std::span<const double> values);

}  // namespace subplan
