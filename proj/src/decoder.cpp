#include "subplan/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace subplan {

namespace {

struct Beam {
  Tokens tokens;
  PrefixTrie::NodeId node;
  double logp;
  std::size_t subgoals_done;
};

bool better(const Beam& a, const Beam& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<Hypothesis> beam_search(const TokenModel& model, std::string_view prompt,
                                    const PrefixTrie& trie, const Catalog& catalog,
                                    const BeamConfig& config) {
  if (config.beam_size < 1 || config.max_subgoals < 1)
    throw DecodeError(DecodeError::Kind::InvalidConfig, "beam_size and max_subgoals must be >= 1");

  const auto& tokenizer = model.tokenizer();
  const Tokens prompt_tokens = tokenizer.encode(prompt);
  if (prompt_tokens.size() >= config.context_budget)
    throw DecodeError(DecodeError::Kind::ContextOverflow,
                      "prompt has " + std::to_string(prompt_tokens.size()) +
                          " tokens; the context budget is " +
                          std::to_string(config.context_budget));

  std::vector<Beam> live{{{}, trie.root(), 0.0, 0}};
  std::vector<Beam> finished;
  Tokens context = prompt_tokens;

  while (!live.empty() && finished.size() < config.beam_size) {
    std::vector<Beam> pool;
    for (const auto& h : live) {
      if (prompt_tokens.size() + h.tokens.size() + 1 > config.context_budget)
        throw DecodeError(DecodeError::Kind::ContextOverflow,
                          "hypothesis outgrew the context budget of " +
                              std::to_string(config.context_budget) + " tokens");
      context.resize(prompt_tokens.size());
      context.insert(context.end(), h.tokens.begin(), h.tokens.end());
      const auto dist = model.next_logprobs(context);

      for (const auto& tok : trie.continuations(h.node)) {
        const bool separator = tok == trie.separator_token();
        if (separator && h.subgoals_done + 1 >= config.max_subgoals) continue;
        auto it = dist.find(tok);
        if (it == dist.end() || !std::isfinite(it->second)) continue;
        Beam next{h.tokens, *trie.advance(h.node, tok), h.logp + it->second,
                  h.subgoals_done + (separator ? 1 : 0)};
        next.tokens.push_back(tok);
        pool.push_back(std::move(next));
      }
    }
    if (pool.empty()) {
      if (finished.empty())
        throw DecodeError(DecodeError::Kind::EmptyBeam, "no admissible token has finite score");
      break;
    }

    const auto keep = std::min(pool.size(), config.beam_size);
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                      better);
    pool.resize(keep);
    live.clear();
    for (auto& b : pool) {
      if (b.node == trie.accept())
        finished.push_back(std::move(b));
      else
        live.push_back(std::move(b));
    }
  }

  std::vector<Hypothesis> out;
  out.reserve(finished.size());
  for (auto& b : finished) {
    Hypothesis h;
    h.plan = parse(tokenizer.decode(b.tokens), catalog);
    h.tokens = std::move(b.tokens);
    h.logp_forward = b.logp;
    out.push_back(std::move(h));
  }
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.logp_forward != b.logp_forward) return a.logp_forward > b.logp_forward;
    return a.text() < b.text();
  });
  if (out.size() > config.beam_size) out.resize(config.beam_size);
  return out;
}

double recompute_logp(const TokenModel& model, std::string_view prompt,
                      const Hypothesis& hypothesis) {
  return score_tokens(model, model.tokenizer().encode(prompt), hypothesis.tokens);
}

}  // namespace subplan
