#pragma once

// End-to-end candidate generation: prompt assembly, reference model fit,
// constrained decoding and reranking.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subplan/decoder.hpp"
#include "subplan/env.hpp"
#include "subplan/ngram.hpp"
#include "subplan/prefix_trie.hpp"
#include "subplan/remote_lm.hpp"
#include "subplan/reranker.hpp"

namespace subplan {

class InsufficientPool : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draws `n` prompt examples round-robin over task types (types in sorted
/// order, each type's entries shuffled with `seed`). Throws
/// InsufficientPool when the pool holds fewer than `n` entries.
std::vector<TrainingPair> sample_prompt(std::span<const PoolEntry> pool, std::size_t n,
                                        std::uint64_t seed);

/// Each affordance-valid (action, object) verbalization twice, once followed
/// by the separator and once by the stop marker.
/// Fitting the reference model on these lines gives it the kind of prior a
/// pretrained model has about which objects go with which verbs.
std::vector<std::string> affordance_corpus(const Catalog& catalog, const Affordances& affordances);

struct ModelSpec {
  std::string kind = "ngram";  // "ngram" or "remote"
  NGramConfig ngram{4, {0.02, 0.1, 0.3, 1.0}, 1.0, 5.0, 32, "=", {".", ","}, 0.7, 10.0, 16};
  bool affordance_prior = true;
  RemoteModelConfig remote;
};

/// The ngram kind is fit on the prompt examples; the remote kind ignores them.
std::shared_ptr<const TokenModel> make_model(const ModelSpec& spec,
                                             std::span<const TrainingPair> prompt_pairs,
                                             const Catalog& catalog,
                                             const Affordances& affordances);

struct PlannerConfig {
  BeamConfig beam;
  RankCriterion criterion = RankCriterion::weighted_mi(0.5);
};

class Planner {
 public:
  Planner(Catalog catalog, std::vector<TrainingPair> prompt_pairs,
          std::shared_ptr<const TokenModel> model, PlannerConfig config);

  /// Top-k plans under the forward score with reverse scores filled in,
  /// ordered by the configured criterion.
  std::vector<Hypothesis> propose(std::string_view instruction) const;
  /// Forward-only decode, ordered by forward score.
  std::vector<Hypothesis> decode(std::string_view instruction) const;

  const Catalog& catalog() const noexcept { return catalog_; }
  const std::vector<TrainingPair>& prompt_pairs() const noexcept { return pairs_; }
  const TokenModel& model() const noexcept { return *model_; }
  const PlannerConfig& config() const noexcept { return config_; }
  const PrefixTrie& trie() const noexcept { return trie_; }

 private:
  Catalog catalog_;
  std::vector<TrainingPair> pairs_;
  std::shared_ptr<const TokenModel> model_;
  PlannerConfig config_;
  PrefixTrie trie_;
};

}  // namespace subplan
