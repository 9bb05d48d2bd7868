#include "subplan/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace subplan {

RankCriterion RankCriterion::weighted_mi(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("lambda must lie in [0, 1]");
  return {CriterionKind::WeightedMI, lambda};
}

RankCriterion RankCriterion::from_name(std::string_view name, double lambda) {
  if (name == "forward") return forward();
  if (name == "reverse") return reverse();
  if (name == "wmi" || name == "weighted_mi") return weighted_mi(lambda);
  throw std::invalid_argument("unknown criterion '" + std::string(name) +
                              "' (expected forward, reverse or wmi)");
}

std::string RankCriterion::name() const {
  switch (kind) {
    case CriterionKind::Forward:
      return "forward";
    case CriterionKind::Reverse:
      return "reverse";
    case CriterionKind::WeightedMI: {
      std::ostringstream os;
      os << "wmi(" << lambda << ")";
      return os.str();
    }
  }
  return "?";
}

double score_reverse(const TokenModel& model, std::span<const TrainingPair> pairs,
                     const SubgoalSequence& hypothesis, std::string_view instruction) {
  return score_continuation(model, build_prompt_reverse(pairs, hypothesis), instruction);
}

double combined_score(double logp_forward, double logp_reverse, double lambda) {
  return (1.0 - lambda) * logp_forward + lambda * logp_reverse;
}

void ReverseScorer::fill(std::vector<Hypothesis>& hypotheses) const {
  for (auto& h : hypotheses)
    if (!h.logp_reverse) h.logp_reverse = score_reverse(model, pairs, h.plan, instruction);
}

double criterion_score(const Hypothesis& h, const RankCriterion& criterion) {
  if (criterion.kind == CriterionKind::Forward) return h.logp_forward;
  if (!h.logp_reverse)
    throw MissingScore("criterion " + criterion.name() + " needs a reverse score for '" +
                       h.text() + "'");
  if (criterion.kind == CriterionKind::Reverse) return *h.logp_reverse;
  return combined_score(h.logp_forward, *h.logp_reverse, criterion.lambda);
}

std::vector<Hypothesis> rank(std::vector<Hypothesis> hypotheses, const RankCriterion& criterion,
                             const ReverseScorer* scorer) {
  if (criterion.needs_reverse() && scorer) scorer->fill(hypotheses);

  struct Keyed {
    double score;
    std::string text;
    Hypothesis h;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(hypotheses.size());
  for (auto& h : hypotheses) {
    const double s = criterion_score(h, criterion);
    h.combined = s;
    auto text = h.text();
    keyed.push_back({s, std::move(text), std::move(h)});
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.text < b.text;
  });
  std::vector<Hypothesis> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::move(k.h));
  return out;
}

}  // namespace subplan
