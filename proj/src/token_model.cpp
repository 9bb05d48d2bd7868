#include "subplan/token_model.hpp"

#include <cmath>
#include <limits>

namespace subplan {

double TokenModel::logprob(std::span<const std::string> context, std::string_view token) const {
  const auto dist = next_logprobs(context);
  auto it = dist.find(std::string(token));
  return it == dist.end() ? -std::numeric_limits<double>::infinity() : it->second;
}

UniformTokenModel::UniformTokenModel(std::vector<std::string> vocabulary,
                                     std::shared_ptr<const Tokenizer> tokenizer)
    : vocab_(std::move(vocabulary)),
      tokenizer_(tokenizer ? std::move(tokenizer) : std::make_shared<WordTokenizer>()) {
  if (vocab_.empty())
    throw ModelError(ModelError::Kind::InvalidConfig, "uniform model needs a nonempty vocabulary");
  logp_ = -std::log(static_cast<double>(vocab_.size()));
}

LogProbs UniformTokenModel::next_logprobs(std::span<const std::string>) const {
  LogProbs out;
  out.reserve(vocab_.size());
  for (const auto& t : vocab_) out.emplace(t, logp_);
  return out;
}

double UniformTokenModel::logprob(std::span<const std::string>, std::string_view token) const {
  for (const auto& t : vocab_)
    if (t == token) return logp_;
  return -std::numeric_limits<double>::infinity();
}

double score_tokens(const TokenModel& model, std::span<const std::string> context,
                    std::span<const std::string> continuation) {
  if (continuation.empty())
    throw ModelError(ModelError::Kind::EmptyContinuation, "continuation has no tokens");
  std::vector<std::string> ctx(context.begin(), context.end());
  ctx.reserve(context.size() + continuation.size());
  double total = 0.0;
  for (const auto& tok : continuation) {
    total += model.logprob(ctx, tok);
    ctx.push_back(tok);
  }
  return total;
}

double score_continuation(const TokenModel& model, std::string_view context,
                          std::string_view continuation) {
  const auto& tok = model.tokenizer();
  const auto ctx = tok.encode(context);
  const auto cont = tok.encode(continuation);
  return score_tokens(model, ctx, cont);
}

}  // namespace subplan
