#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "subplan/benchmark.hpp"
#include "subplan/decoder.hpp"
#include "subplan/ngram.hpp"
#include "subplan/planner.hpp"
#include "subplan/prefix_trie.hpp"
#include "subplan/prompt.hpp"

using namespace subplan;

namespace {

Catalog three() { return Catalog({{"apple", "apple"}, {"egg", "egg"}, {"sink", "sink"}}); }

constexpr std::array<ActionType, 3> kThreeActions{ActionType::Pickup, ActionType::Heat,
                                                  ActionType::Clean};

std::vector<TrainingPair> small_pairs(const Catalog& c) {
  return {
      {"rinse the apple", {{{ActionType::Pickup, c.at("apple")}, {ActionType::Clean, c.at("sink")}}}},
      {"grab an egg", {{{ActionType::Pickup, c.at("egg")}}}},
      {"warm the egg", {{{ActionType::Pickup, c.at("egg")}, {ActionType::Heat, c.at("sink")}}}},
  };
}

struct Scored {
  std::string text;
  Tokens tokens;
  double logp;
};

// Every plan of 1 or 2 subgoals, scored token by token from the full
// next-token distributions.
std::vector<Scored> enumerate_all(const TokenModel& m, const std::string& prompt,
                                  const Catalog& c) {
  std::vector<SubgoalSequence> plans;
  for (auto a : kThreeActions)
    for (const auto& o : c.objects()) {
      plans.push_back({{{a, o}}});
      for (auto a2 : kThreeActions)
        for (const auto& o2 : c.objects()) plans.push_back({{{a, o}, {a2, o2}}});
    }
  const auto& tok = m.tokenizer();
  std::vector<Scored> out;
  for (const auto& p : plans) {
    Scored s{serialize(p), tok.encode(serialize(p)), 0.0};
    auto ctx = tok.encode(prompt);
    for (const auto& t : s.tokens) {
      s.logp += m.next_logprobs(ctx).at(t);
      ctx.push_back(t);
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    return a.logp != b.logp ? a.logp > b.logp : a.text < b.text;
  });
  return out;
}

}  // namespace

TEST_CASE("uniform model: equal scores ordered by text") {
  const Catalog c({{"egg", "egg"}, {"apple", "apple"}});
  WordTokenizer tok;
  const std::array<ActionType, 1> pick{ActionType::Pickup};
  const auto trie = PrefixTrie::build(c, tok, pick);
  UniformTokenModel m({"pick", "up", "apple", "egg", ",", "."});
  const auto hyps = beam_search(m, "get fruit = ", trie, c, {10, 1, 1024});
  REQUIRE(hyps.size() == 2);
  CHECK(hyps[0].text() == "pick up apple.");
  CHECK(hyps[1].text() == "pick up egg.");
  CHECK(hyps[0].logp_forward == hyps[1].logp_forward);
  CHECK(hyps[0].logp_forward == doctest::Approx(4 * std::log(1.0 / 6.0)));
}

TEST_CASE("full beam equals exhaustive enumeration") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok, kThreeActions);
  const auto pairs = small_pairs(c);
  for (double r : {0.0, 0.7}) {
    NGramConfig cfg{3, {0.1, 0.3, 1.0}, 1.0, 5.0, 16, "=", {".", ","}, r, 10.0, 8};
    const auto model = fit_prompt_model(pairs, c, cfg);
    const auto prompt = build_prompt_forward(pairs, "rinse an egg");
    const auto oracle = enumerate_all(model, prompt, c);
    REQUIRE(oracle.size() == 90);
    const auto hyps = beam_search(model, prompt, trie, c, {oracle.size(), 2, 2048});
    REQUIRE(hyps.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK(hyps[i].text() == oracle[i].text);
      CHECK(std::abs(hyps[i].logp_forward - oracle[i].logp) <= 1e-12);
    }
    // Smaller beams return a prefix-ordered subset with finite scores.
    const auto top5 = beam_search(model, prompt, trie, c, {5, 2, 2048});
    CHECK(top5.size() == 5);
    for (std::size_t i = 1; i < top5.size(); ++i)
      CHECK(top5[i - 1].logp_forward >= top5[i].logp_forward);
  }
}

TEST_CASE("beam size 1 equals greedy constrained decoding") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok, kThreeActions);
  const auto pairs = small_pairs(c);
  const auto model = fit_prompt_model(pairs, c, {3});
  for (const std::string query : {"rinse an egg", "warm the apple", "grab the sink"}) {
    const auto prompt = build_prompt_forward(pairs, query);
    auto ctx = tok.encode(prompt);
    Tokens greedy;
    double logp = 0.0;
    auto node = trie.root();
    std::size_t done = 0;
    while (node != trie.accept()) {
      const auto dist = model.next_logprobs(ctx);
      std::string best;
      double best_lp = -INFINITY;
      for (const auto& t : trie.continuations(node)) {
        if (t == "," && done + 1 >= 3) continue;
        if (dist.at(t) > best_lp) {
          best_lp = dist.at(t);
          best = t;
        }
      }
      if (best == ",") ++done;
      greedy.push_back(best);
      ctx.push_back(best);
      logp += best_lp;
      node = *trie.advance(node, best);
    }
    const auto hyps = beam_search(model, prompt, trie, c, {1, 3, 2048});
    REQUIRE(hyps.size() == 1);
    CHECK(hyps[0].tokens == greedy);
    CHECK(hyps[0].logp_forward == logp);
  }
}

TEST_CASE("recomputed scores equal search-time scores exactly") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok);
  const auto pairs = small_pairs(c);
  ModelSpec spec;
  const auto model = fit_prompt_model(pairs, c, spec.ngram);
  const auto prompt = build_prompt_forward(pairs, "clean the egg");
  const auto hyps = beam_search(model, prompt, trie, c, {10, 4, 2048});
  REQUIRE(!hyps.empty());
  for (const auto& h : hyps) {
    CHECK(recompute_logp(model, prompt, h) == h.logp_forward);
    CHECK(score_continuation(model, prompt, h.text()) == h.logp_forward);
    // Partial sums never increase as tokens are appended.
    auto ctx = tok.encode(prompt);
    double partial = 0.0;
    for (const auto& t : h.tokens) {
      const double next = partial + model.logprob(ctx, t);
      CHECK(next <= partial);
      partial = next;
      ctx.push_back(t);
    }
    CHECK(h.plan == parse(h.text(), c));
    CHECK(trie.accepts(h.tokens));
  }
  Hypothesis swapped = hyps.front();
  swapped.tokens[0] = "sink";
  CHECK(recompute_logp(model, prompt, swapped) != hyps.front().logp_forward);
  CHECK_FALSE(trie.accepts(swapped.tokens));
}

TEST_CASE("decoding is deterministic") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok);
  const auto pairs = small_pairs(c);
  const auto model = fit_prompt_model(pairs, c, ModelSpec{}.ngram);
  const auto prompt = build_prompt_forward(pairs, "heat an apple");
  const auto a = beam_search(model, prompt, trie, c, {});
  const auto b = beam_search(model, prompt, trie, c, {});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].logp_forward == b[i].logp_forward);
  }
}

TEST_CASE("max_subgoals bounds plan length") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok);
  UniformTokenModel m({"pick", "up", "apple", "egg", "sink", ",", "."});
  for (std::size_t k : {1u, 2u, 3u}) {
    const auto hyps = beam_search(m, "x = ", trie, c, {50, k, 1024});
    CHECK(!hyps.empty());
    for (const auto& h : hyps) CHECK(h.plan.size() <= k);
  }
}

TEST_CASE("decoder errors") {
  const auto c = three();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok);
  UniformTokenModel m({"pick", "up", "apple", ",", "."});
  auto kind = [&](const std::string& prompt, BeamConfig cfg) {
    try {
      beam_search(m, prompt, trie, c, cfg);
    } catch (const DecodeError& e) {
      return e.kind();
    }
    FAIL("expected a decode error");
    return DecodeError::Kind::EmptyBeam;
  };
  CHECK(kind("a b c d e = ", {10, 3, 4}) == DecodeError::Kind::ContextOverflow);
  CHECK(kind("a = ", {10, 3, 4}) == DecodeError::Kind::ContextOverflow);
  CHECK(kind("a = ", {0, 3, 100}) == DecodeError::Kind::InvalidConfig);
  CHECK(kind("a = ", {1, 0, 100}) == DecodeError::Kind::InvalidConfig);
  UniformTokenModel none({"zzz"});
  CHECK_THROWS_AS(beam_search(none, "a = ", trie, c, {}), DecodeError);
}

TEST_CASE("every output parses on part of the shipped benchmark") {
  const auto c = Catalog::load(SUBPLAN_DATA_DIR "/catalog.tsv");
  const auto bench = load_benchmark(SUBPLAN_DATA_DIR "/benchmark", c);
  const Environment env(c);
  const auto pairs = sample_prompt(bench.pool("train"), 22, 0);
  const auto model = make_model(ModelSpec{}, pairs, c, env.affordances());
  const Planner planner(c, pairs, model, {});
  const auto tasks = bench.split("eval");
  WordTokenizer tok;
  for (std::size_t i = 0; i < 20; ++i) {
    for (const auto& h : planner.decode(tasks[i]->instruction)) {
      CHECK(h.plan == parse(tok.decode(h.tokens), c));
      CHECK(planner.trie().accepts(h.tokens));
    }
  }
}
