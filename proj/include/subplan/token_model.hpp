#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "subplan/tokenizer.hpp"

namespace subplan {

/// Natural-log probabilities keyed by token string.
using LogProbs = std::unordered_map<std::string, double>;

class ModelError : public std::runtime_error {
 public:
  enum class Kind { OutOfVocabulary, InvalidOrder, InvalidConfig, EmptyCorpus, EmptyContinuation };
  ModelError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Autoregressive next-token scorer. Implementations must be safe for
/// concurrent const calls.
class TokenModel {
 public:
  virtual ~TokenModel() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  /// Next-token log-distribution given the full context.
  virtual LogProbs next_logprobs(std::span<const std::string> context) const = 0;
  /// log p(token | context); -infinity when the model assigns no mass.
  virtual double logprob(std::span<const std::string> context, std::string_view token) const;
  /// Whether identical contexts are guaranteed identical distributions.
  virtual bool deterministic() const { return true; }
};

/// Uniform distribution over a fixed vocabulary.
class UniformTokenModel final : public TokenModel {
 public:
  explicit UniformTokenModel(std::vector<std::string> vocabulary,
                             std::shared_ptr<const Tokenizer> tokenizer = nullptr);

  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  LogProbs next_logprobs(std::span<const std::string> context) const override;
  double logprob(std::span<const std::string> context, std::string_view token) const override;

  const std::vector<std::string>& vocabulary() const { return vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  double logp_;
};

/// Sum of token log-probabilities of `continuation` following `context`.
double score_continuation(const TokenModel& model, std::string_view context,
                          std::string_view continuation);
/// Token-level form: scores each continuation token given context plus the
/// preceding continuation tokens, accumulating left to right from 0.
double score_tokens(const TokenModel& model, std::span<const std::string> context,
                    std::span<const std::string> continuation);

}  // namespace subplan
