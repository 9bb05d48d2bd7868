#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "subplan/prompt.hpp"
#include "subplan/token_model.hpp"

namespace subplan {

struct NGramConfig {
  int order = 3;
  /// Mixture weight per order (index 0 = unigram). Empty selects weights
  /// proportional to 1, 2, 4, ... so higher orders dominate.
  std::vector<double> weights;
  /// Additive count for the unigram level; keeps every token positive.
  double unigram_add = 1.0;
  /// Boost for tokens seen in the most recent `cache_window` context tokens;
  /// 0 disables the cache.
  double cache_boost = 0.0;
  std::size_t cache_window = 0;
  /// When set and present in the context, the cache window ends just before
  /// the latest occurrence of this token instead of at the context end.
  std::string cache_until;
  /// Token sequence that ends the cache's look-back (its latest occurrence
  /// before the window end and everything earlier are excluded).
  std::vector<std::string> cache_boundary;
  /// Mixture weight of the retrieval component; 0 disables it.
  double retrieval_weight = 0.0;
  /// Example weights are exp(sharpness * (cos - 1)).
  double retrieval_sharpness = 10.0;
  int retrieval_order = 6;
  /// Token that ends each rendered example in a prompt.
  std::string retrieval_separator = ",";
};

/// A (source, target) example the model may be prompted with. Examples in
/// the same group share a direction (all instruction -> plan, say).
struct RetrievalExample {
  std::string source;
  std::string target;
  int group = 0;
};

struct RetrievalSpec {
  std::vector<RetrievalExample> examples;
  /// Tokens that may be swapped when adapting an example to a query (the
  /// object words, typically).
  std::vector<std::string> substitutable;
};

/// Jelinek-Mercer interpolated n-gram model with an optional recency cache.
///
///   q(w | h) = sum_k w_k p_k(w | h_k) / sum_k w_k
///   m(w | h) = (1 - r) q(w | h) + r q_ret(w | h)
///   p(w | h) = m(w | h) * (1 + b * n(w)) / Z
///
/// The sum runs over orders whose history was observed in the corpus (the
/// add-alpha unigram is always present), n(w) counts w in the cache window,
/// b is `cache_boost` and Z renormalizes. The window holds up to
/// `cache_window` tokens ending at the context end (or before the latest
/// `cache_until` token) and starting after the latest `cache_boundary`.
///
/// q_ret is the retrieval component, active when the context looks like a
/// prompt over the fitted examples: "s1 = t1 , s2 = t2 , ... , s = g". It
/// reads the query source s and the partial target g, weights each example
/// of the matching group by exp(beta (cos(s, s_i) - 1)) with tf-idf cosine
/// over sources, and interpolates example-weighted n-grams over the targets
/// ("=" t_i separator) with history taken from "=" g. r is
/// `retrieval_weight`, beta `retrieval_sharpness`.
/// Before counting, each target is adapted to the query: s_i and s are
/// aligned by longest common subsequence, and every differing block made of
/// substitutable tokens on both sides is rewritten in t_i from its s_i form
/// to its s form (egg -> apple when only the object changed).
/// Tokens outside the vocabulary score as "<unk>".
class NGramModel final : public TokenModel {
 public:
  static constexpr const char* kUnknown = "<unk>";

  /// Each corpus entry is tokenized separately; n-grams never span entries.
  /// `extra_vocabulary` adds tokens that may not occur in the corpus.
  static NGramModel fit(std::span<const std::string> corpus, NGramConfig config,
                        std::span<const std::string> extra_vocabulary = {},
                        std::shared_ptr<const Tokenizer> tokenizer = nullptr,
                        const RetrievalSpec& retrieval = {});

  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  LogProbs next_logprobs(std::span<const std::string> context) const override;
  double logprob(std::span<const std::string> context, std::string_view token) const override;

  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  const NGramConfig& config() const noexcept { return config_; }

 private:
  using TokenId = std::uint32_t;

  struct HistoryCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };

  // Everything about a context that does not depend on the predicted token.
  struct Prepared {
    std::vector<const HistoryCounts*> levels;  // index k-1; null when inactive
    double active_weight = 0.0;
    std::unordered_map<TokenId, double> boost;  // multiplier minus one
    double normalizer = 1.0;
    bool retrieval_active = false;
    std::unordered_map<TokenId, double> retrieval;  // q_ret
  };

  struct Example {
    std::vector<TokenId> source;
    std::vector<TokenId> target;  // "=" target separator
    std::unordered_map<TokenId, double> source_vec;  // unit-norm tf-idf
    int group = 0;
  };

  // Example targets adapted to one query source, with their weights.
  struct Adapted {
    std::vector<std::vector<TokenId>> targets;
    std::vector<double> weights;
  };
  struct AdaptedCache;

  NGramModel() = default;
  TokenId id_of(std::string_view token) const;
  static std::string history_key(std::span<const TokenId> ids);
  void fit_retrieval(const RetrievalSpec& spec);
  std::shared_ptr<const Adapted> adapt(std::span<const TokenId> query, std::optional<int> group) const;
  std::vector<TokenId> rewrite(const Example& ex, std::span<const TokenId> query) const;
  void prepare_retrieval(std::span<const std::string> context, Prepared& p) const;
  Prepared prepare(std::span<const std::string> context) const;
  double mixture(const Prepared& p, TokenId w) const;
  double prob(const Prepared& p, TokenId w) const;

  NGramConfig config_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId unk_ = 0;
  std::vector<std::uint64_t> unigram_;
  std::uint64_t unigram_total_ = 0;
  // levels_[k] holds histories of length k (k >= 1) for order k+1.
  std::vector<std::unordered_map<std::string, HistoryCounts>> levels_;
  std::vector<Example> examples_;
  std::unordered_map<TokenId, double> idf_;
  std::vector<bool> substitutable_;  // by token id
  std::shared_ptr<AdaptedCache> adapted_cache_;
};

/// Reference in-context scorer: an n-gram fit on the rendered prompt
/// examples (both "t = s(g)" and "s(g) = t" directions) plus optional
/// background lines, with the catalog's verbalization tokens added to the
/// vocabulary. The examples also feed the retrieval component, group 0 for
/// the forward direction and group 1 for the reverse one.
NGramModel fit_prompt_model(std::span<const TrainingPair> pairs, const Catalog& catalog,
                            const NGramConfig& config,
                            std::span<const std::string> background = {});

}  // namespace subplan
