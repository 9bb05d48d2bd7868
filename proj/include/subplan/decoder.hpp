#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "subplan/grammar.hpp"
#include "subplan/prefix_trie.hpp"
#include "subplan/token_model.hpp"

namespace subplan {

struct Hypothesis {
  Tokens tokens;         // continuation tokens, stop token included
  SubgoalSequence plan;  // parsed on finalization
  double logp_forward = 0.0;
  std::optional<double> logp_reverse;
  std::optional<double> combined;

  std::string text() const { return serialize(plan); }
};

struct BeamConfig {
  std::size_t beam_size = 10;
  std::size_t max_subgoals = 10;
  /// Hard cap on prompt tokens plus generated tokens.
  std::size_t context_budget = 2048;
};

class DecodeError : public std::runtime_error {
 public:
  enum class Kind { ContextOverflow, EmptyBeam, InvalidConfig };
  DecodeError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Prefix-constrained beam search for the top-k plans under log p(h | prompt).
///
/// Every step pools the admissible one-token extensions of all live
/// hypotheses and keeps the best `beam_size` of them; extensions ending in
/// the stop token are set aside as finished. Search ends once `beam_size`
/// hypotheses have finished or nothing is live. Scores are raw sums of token
/// log-probabilities with no length normalization. Results are ordered by
/// descending score, ties by serialized text.
std::vector<Hypothesis> beam_search(const TokenModel& model, std::string_view prompt,
                                    const PrefixTrie& trie, const Catalog& catalog,
                                    const BeamConfig& config);

/// Re-scores a hypothesis' tokens; equals the search-time score exactly.
double recompute_logp(const TokenModel& model, std::string_view prompt,
                      const Hypothesis& hypothesis);

}  // namespace subplan
