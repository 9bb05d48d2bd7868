#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "subplan/decoder.hpp"
#include "subplan/prompt.hpp"
#include "subplan/token_model.hpp"

namespace subplan {

enum class CriterionKind { Forward, Reverse, WeightedMI };

struct RankCriterion {
  CriterionKind kind = CriterionKind::WeightedMI;
  double lambda = 0.5;

  static RankCriterion forward() { return {CriterionKind::Forward, 0.0}; }
  static RankCriterion reverse() { return {CriterionKind::Reverse, 1.0}; }
  static RankCriterion weighted_mi(double lambda = 0.5);
  /// Accepts "forward", "reverse" and "wmi".
  static RankCriterion from_name(std::string_view name, double lambda = 0.5);

  std::string name() const;
  bool needs_reverse() const { return kind != CriterionKind::Forward; }
};

class MissingScore : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log p(instruction | h) under the role-swapped prompt.
double score_reverse(const TokenModel& model, std::span<const TrainingPair> pairs,
                     const SubgoalSequence& hypothesis, std::string_view instruction);

/// (1 - lambda) * forward + lambda * reverse.
double combined_score(double logp_forward, double logp_reverse, double lambda);

/// Everything needed to fill in reverse scores on demand.
struct ReverseScorer {
  const TokenModel& model;
  std::span<const TrainingPair> pairs;
  std::string instruction;

  void fill(std::vector<Hypothesis>& hypotheses) const;
};

/// Criterion value of a hypothesis; throws MissingScore if it needs a
/// reverse score that is absent.
double criterion_score(const Hypothesis& h, const RankCriterion& criterion);

/// Stable descending sort by the criterion, ties broken by serialized text.
/// Missing reverse scores are computed with `scorer` when given; otherwise
/// their absence throws MissingScore. Sets `combined` on every hypothesis.
std::vector<Hypothesis> rank(std::vector<Hypothesis> hypotheses, const RankCriterion& criterion,
                             const ReverseScorer* scorer = nullptr);

}  // namespace subplan
