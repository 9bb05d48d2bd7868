#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "subplan/decoder.hpp"
#include "subplan/ngram.hpp"
#include "subplan/prefix_trie.hpp"
#include "subplan/prompt.hpp"
#include "subplan/remote_lm.hpp"

using namespace subplan;
using json = nlohmann::json;

namespace {

Catalog small() { return Catalog({{"apple", "apple"}, {"egg", "egg"}, {"sink", "sink"}}); }

double total_mass(const LogProbs& lp) {
  double s = 0.0;
  for (const auto& [t, v] : lp) s += std::exp(v);
  return s;
}

TrainingPair pair(std::string instruction, ActionType a, const ObjectType& o) {
  return {std::move(instruction), SubgoalSequence{{{a, o}}}};
}

// Serves a fixed distribution and counts requests.
class MockTransport final : public LmTransport {
 public:
  explicit MockTransport(std::function<std::string(const json&)> reply, std::size_t* calls)
      : reply_(std::move(reply)), calls_(calls) {}
  std::string post(const std::string& body) override {
    ++*calls_;
    return reply_(json::parse(body));
  }

 private:
  std::function<std::string(const json&)> reply_;
  std::size_t* calls_;
};

std::string uniform_reply(const std::vector<std::string>& vocab, const json& req) {
  const auto k = req.at("top_k").get<int>();
  if (k > static_cast<int>(vocab.size())) return json{{"error", "top_k exceeds vocabulary"}}.dump();
  json lp = json::object();
  for (const auto& t : vocab) lp[t] = -std::log(static_cast<double>(vocab.size()));
  return json{{"logprobs", lp}, {"deterministic", true}}.dump();
}

}  // namespace

TEST_CASE("forward prompt format") {
  const auto c = small();
  std::vector<TrainingPair> pairs{pair("slice an apple", ActionType::Slice, c.at("apple"))};
  CHECK(build_prompt_forward(pairs, "heat an egg") == "slice an apple = slice apple., heat an egg = ");
  CHECK(build_prompt_forward({}, "heat an egg") == "heat an egg = ");
}

TEST_CASE("reverse prompt format and role swap") {
  const auto c = small();
  std::vector<TrainingPair> pairs{pair("slice an apple", ActionType::Slice, c.at("apple"))};
  SubgoalSequence h{{{ActionType::Slice, c.at("apple")}}};
  CHECK(build_prompt_reverse(pairs, h) == "slice apple. = slice an apple, slice apple. = ");
  CHECK(build_prompt_reverse({}, h) == "slice apple. = ");

  std::vector<std::pair<std::string, std::string>> swapped;
  for (const auto& p : pairs) swapped.emplace_back(serialize(p.plan), p.instruction);
  CHECK(build_prompt_reverse(pairs, h) == render_prompt(swapped, serialize(h)));
}

TEST_CASE("prompt with 22 pairs holds 22 equals signs before the query") {
  const auto c = small();
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 22; ++i)
    pairs.push_back(pair("task number " + std::to_string(i), kAllActions[i % 7], c[i % 3]));
  const auto prompt = build_prompt_forward(pairs, "rinse the egg");
  const std::string tail = "rinse the egg = ";
  REQUIRE(prompt.ends_with(tail));
  const auto head = prompt.substr(0, prompt.size() - tail.size());
  CHECK(std::count(head.begin(), head.end(), '=') == 22);
}

TEST_CASE("prompt builder is injective on random inputs") {
  const auto c = small();
  std::mt19937_64 rng(3);
  const std::vector<std::string> words{"put", "the", "egg", "apple", "in", "sink", "warm", "a"};
  std::set<std::string> seen;
  std::set<std::pair<std::vector<std::string>, std::string>> inputs;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TrainingPair> pairs;
    const auto n = rng() % 3;
    std::vector<std::string> key;
    for (std::size_t i = 0; i < n; ++i) {
      std::string instr = words[rng() % words.size()];
      for (auto len = rng() % 3; len > 0; --len) instr += " " + words[rng() % words.size()];
      pairs.push_back(pair(instr, kAllActions[rng() % 7], c[rng() % 3]));
      key.push_back(instr + "|" + serialize(pairs.back().plan));
    }
    std::string query = words[rng() % words.size()];
    if (!inputs.insert({key, query}).second) continue;
    CHECK(seen.insert(build_prompt_forward(pairs, query)).second);
  }
}

TEST_CASE("training pair file round trip") {
  const auto c = small();
  std::vector<TrainingPair> pairs{pair("slice an apple", ActionType::Slice, c.at("apple")),
                                  pair("get the egg", ActionType::Pickup, c.at("egg"))};
  CHECK(parse_training_pairs(format_training_pairs(pairs), c) == pairs);
  CHECK(parse_training_pairs("# header\nget the egg\tpick up egg.\n", c).size() == 1);
  CHECK_THROWS(parse_training_pairs("no tab here\n", c));
  CHECK_THROWS_AS(parse_training_pairs("x\tpick up pear.\n", c), GrammarError);
}

TEST_CASE("uniform model scores L log(1/V)") {
  UniformTokenModel m({"a", "b", "c", "d"});
  CHECK(score_continuation(m, "a b", "c d a") == doctest::Approx(3 * std::log(0.25)).epsilon(1e-15));
  CHECK(total_mass(m.next_logprobs({})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(score_continuation(m, "a", ""), ModelError);
}

TEST_CASE("score_continuation obeys the chain rule exactly") {
  const std::vector<std::string> corpus{"pick up apple , slice apple .", "pick up egg ."};
  const auto m = NGramModel::fit(corpus, {3, {}, 1.0});
  const std::string c = "pick up", a = "apple ,", b = "slice apple .";
  const double whole = score_continuation(m, c, a + " " + b);
  const double split = score_continuation(m, c, a) + score_continuation(m, c + " " + a, b);
  CHECK(whole == split);
}

TEST_CASE("bigram probabilities match hand-computed smoothed counts") {
  // "a b a b a b a b a b": vocab {<unk>, a, b}, unigram (5+1)/(10+3) for a
  // and b, 1/13 for <unk>; a is always followed by b, b by a (4 of 4).
  const std::vector<std::string> corpus{"a b a b a b a b a b"};
  const auto m = NGramModel::fit(corpus, {2, {1.0, 1.0}, 1.0});
  const std::vector<std::string> ctx_a{"a"}, ctx_b{"b"};
  CHECK(std::exp(m.logprob(ctx_a, "b")) == doctest::Approx(19.0 / 26.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx_a, "a")) == doctest::Approx(3.0 / 13.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx_a, NGramModel::kUnknown)) ==
        doctest::Approx(1.0 / 26.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx_b, "a")) == doctest::Approx(19.0 / 26.0).epsilon(1e-12));
  // Unseen history: only the unigram level is active.
  const std::vector<std::string> ctx_z{"zzz"};
  CHECK(std::exp(m.logprob(ctx_z, "a")) == doctest::Approx(6.0 / 13.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx_a, "never-seen")) == doctest::Approx(1.0 / 26.0).epsilon(1e-12));
}

TEST_CASE("repeated plan puts maximal mass on the observed successor") {
  const std::vector<std::string> corpus(5, "pick up apple .");
  const auto m = NGramModel::fit(corpus, {2});
  const std::vector<std::string> ctx{"pick"};
  const auto lp = m.next_logprobs(ctx);
  const auto best = std::max_element(lp.begin(), lp.end(),
                                     [](auto& x, auto& y) { return x.second < y.second; });
  CHECK(best->first == "up");
}

TEST_CASE("order 1 is context independent and unigram-only weights reduce to it") {
  const std::vector<std::string> corpus{"pick up apple .", "heat in sink egg ."};
  const auto uni = NGramModel::fit(corpus, {1});
  const auto tri = NGramModel::fit(corpus, {3, {1.0, 0.0, 0.0}});
  const std::vector<std::string> c1{"pick"}, c2{"heat", "in"};
  CHECK(uni.next_logprobs(c1) == uni.next_logprobs(c2));
  for (const auto& [t, v] : uni.next_logprobs(c1)) CHECK(tri.logprob(c2, t) == doctest::Approx(v));
}

TEST_CASE("invalid configurations are rejected") {
  const std::vector<std::string> corpus{"a b"};
  CHECK_THROWS_AS(NGramModel::fit(corpus, {0}), ModelError);
  try {
    NGramModel::fit(corpus, {0});
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelError::Kind::InvalidOrder);
  }
  CHECK_THROWS_AS(NGramModel::fit({}, {2}), ModelError);
  CHECK_THROWS_AS(NGramModel::fit(corpus, {2, {1.0}}), ModelError);
  NGramConfig bad;
  bad.retrieval_weight = 1.5;
  CHECK_THROWS_AS(NGramModel::fit(corpus, bad), ModelError);
}

TEST_CASE("distributions normalize over random contexts") {
  const auto c = Catalog::load(SUBPLAN_DATA_DIR "/catalog.tsv");
  std::vector<TrainingPair> pairs{
      pair("slice an apple", ActionType::Slice, c.at("apple")),
      pair("warm up an egg", ActionType::Heat, c.at("microwave")),
      pair("turn on the desk lamp", ActionType::ToggleOn, c.at("desklamp")),
  };
  NGramConfig cfg{4, {0.02, 0.1, 0.3, 1.0}, 1.0, 5.0, 32, "=", {".", ","}, 0.7, 10.0, 16};
  const auto m = fit_prompt_model(pairs, c, cfg);
  const auto& vocab = m.vocabulary();
  std::mt19937_64 rng(11);
  std::vector<std::vector<std::string>> contexts;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ctx;
    for (auto n = rng() % 30; n > 0; --n) ctx.push_back(vocab[rng() % vocab.size()]);
    contexts.push_back(ctx);
  }
  // Prompt-shaped contexts exercise the retrieval and cache components.
  WordTokenizer tok;
  contexts.push_back(tok.encode(build_prompt_forward(pairs, "slice an egg")));
  contexts.push_back(tok.encode(build_prompt_forward(pairs, "slice an egg") + "slice"));
  contexts.push_back(tok.encode(build_prompt_reverse(pairs, pairs[0].plan) + "slice an"));
  for (const auto& ctx : contexts) {
    const auto lp = m.next_logprobs(ctx);
    CHECK(lp.size() == vocab.size());
    CHECK(std::abs(total_mass(lp) - 1.0) < 1e-9);
    for (const auto& [t, v] : lp) CHECK(std::isfinite(v));
  }
}

TEST_CASE("retrieval component matches a hand-computed example distribution") {
  // One example "p = x y ,", history "=": level 0 sees x, y and "," once
  // each, level 1 (after "=") sees only x. Levels weigh 1 and 2, so
  // q(x) = (1/3 + 2) / 3, q(y) = q(,) = (1/3) / 3.
  const std::vector<std::string> corpus{"p = x y"};
  NGramConfig cfg{1};
  cfg.retrieval_weight = 1.0;
  cfg.retrieval_sharpness = 0.0;
  cfg.retrieval_order = 2;
  RetrievalSpec spec{{{"p", "x y", 0}}, {}};
  const auto m = NGramModel::fit(corpus, cfg, {}, nullptr, spec);
  const std::vector<std::string> ctx{"p", "=", "x", "y", ",", "p", "="};
  CHECK(std::exp(m.logprob(ctx, "x")) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx, "y")) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(ctx, ",")) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(total_mass(m.next_logprobs(ctx)) == doctest::Approx(1.0).epsilon(1e-12));
  // Outside a prompt the retrieval component is inactive.
  const std::vector<std::string> plain{"x"};
  CHECK(total_mass(m.next_logprobs(plain)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::exp(m.logprob(plain, "x")) > 0.0);
}

TEST_CASE("retrieval adapts an example's object to the query") {
  const std::vector<std::string> corpus{"slice the egg = slice egg ."};
  NGramConfig cfg{1};
  cfg.retrieval_weight = 1.0;
  cfg.retrieval_order = 6;
  const std::vector<std::string> extra{"apple"};
  RetrievalSpec spec{{{"slice the egg", "slice egg.", 0}}, {"apple", "egg"}};
  const auto m = NGramModel::fit(corpus, cfg, extra, nullptr, spec);
  WordTokenizer tok;
  const auto ctx = tok.encode("slice the egg = slice egg., slice the apple = slice");
  CHECK(m.logprob(ctx, "apple") > m.logprob(ctx, "egg"));
  const auto lp = m.next_logprobs(ctx);
  const auto best = std::max_element(lp.begin(), lp.end(),
                                     [](auto& x, auto& y) { return x.second < y.second; });
  CHECK(best->first == "apple");
}

TEST_CASE("cache boost raises recently seen tokens and keeps normalization") {
  const std::vector<std::string> corpus{"a b c d"};
  NGramConfig plain{1};
  NGramConfig cached{1};
  cached.cache_boost = 3.0;
  cached.cache_window = 4;
  const auto m0 = NGramModel::fit(corpus, plain);
  const auto m1 = NGramModel::fit(corpus, cached);
  const std::vector<std::string> ctx{"c", "c"};
  // p(c) = u(c) (1 + 3 * 2) / (1 + 6 u(c)), with u(c) = 2 / 9.
  const double u = 2.0 / 9.0;
  CHECK(std::exp(m1.logprob(ctx, "c")) == doctest::Approx(u * 7.0 / (1 + 6 * u)).epsilon(1e-12));
  CHECK(m1.logprob(ctx, "a") < m0.logprob(ctx, "a"));
  CHECK(total_mass(m1.next_logprobs(ctx)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fitted model is deterministic") {
  const auto c = small();
  std::vector<TrainingPair> pairs{pair("slice an apple", ActionType::Slice, c.at("apple"))};
  const auto m1 = fit_prompt_model(pairs, c, {3});
  const auto m2 = fit_prompt_model(pairs, c, {3});
  WordTokenizer tok;
  const auto ctx = tok.encode(build_prompt_forward(pairs, "slice an egg"));
  CHECK(m1.next_logprobs(ctx) == m2.next_logprobs(ctx));
  CHECK(m1.next_logprobs(ctx) == m1.next_logprobs(ctx));
}

TEST_CASE("remote model with a uniform mock decodes like the local uniform model") {
  const auto c = small();
  WordTokenizer tok;
  const auto trie = PrefixTrie::build(c, tok);
  std::set<std::string> vs{",", "."};
  for (auto a : kAllActions)
    for (const auto& t : tok.encode(action_phrase(a))) vs.insert(t);
  for (const auto& o : c.objects()) vs.insert(o.display);
  const std::vector<std::string> vocab(vs.begin(), vs.end());

  std::size_t calls = 0;
  RemoteModelConfig rc;
  rc.endpoint = "mock://uniform";
  RemoteTokenModel remote(
      rc, std::make_unique<MockTransport>([&](const json& r) { return uniform_reply(vocab, r); },
                                          &calls));
  UniformTokenModel local(vocab);
  BeamConfig bc{6, 2, 1024};
  const auto a = beam_search(remote, "heat an egg = ", trie, c, bc);
  const auto b = beam_search(local, "heat an egg = ", trie, c, bc);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].logp_forward == b[i].logp_forward);
  }
  CHECK(remote.deterministic());
}

TEST_CASE("remote cache answers repeated contexts without a request") {
  std::size_t calls = 0;
  const std::vector<std::string> vocab{"a", "b"};
  RemoteModelConfig rc;
  rc.endpoint = "mock://x";
  RemoteTokenModel m(
      rc, std::make_unique<MockTransport>([&](const json& r) { return uniform_reply(vocab, r); },
                                          &calls));
  const std::vector<std::string> ctx{"a"};
  m.next_logprobs(ctx);
  CHECK(m.request_count() == 1);
  m.next_logprobs(ctx);
  CHECK(m.request_count() == 1);
  CHECK(calls == 1);
  const std::vector<std::string> other{"b"};
  m.next_logprobs(other);
  CHECK(calls == 2);
}

TEST_CASE("remote errors are classified") {
  std::size_t calls = 0;
  const std::vector<std::string> vocab{"a", "b"};
  auto make = [&](std::function<std::string(const json&)> reply, int top_k = 0,
                  std::optional<std::set<std::string>> expected = std::nullopt) {
    RemoteModelConfig rc;
    rc.endpoint = "mock://x";
    rc.top_k = top_k;
    rc.expected_vocabulary = std::move(expected);
    return std::make_unique<RemoteTokenModel>(
        rc, std::make_unique<MockTransport>(std::move(reply), &calls));
  };
  auto kind_of = [](const RemoteTokenModel& m) {
    try {
      m.next_logprobs({});
    } catch (const RemoteError& e) {
      return e.kind();
    }
    FAIL("expected a remote error");
    return RemoteError::Kind::Transport;
  };
  auto uni = [&](const json& r) { return uniform_reply(vocab, r); };
  CHECK(kind_of(*make(uni, 5)) == RemoteError::Kind::MalformedResponse);
  CHECK(kind_of(*make([](const json&) { return std::string("not json"); })) ==
        RemoteError::Kind::MalformedResponse);
  CHECK(kind_of(*make([](const json&) { return std::string(R"({"logprobs": {"a": 0.5}})"); })) ==
        RemoteError::Kind::MalformedResponse);
  CHECK(kind_of(*make(uni, 0, std::set<std::string>{"a"})) ==
        RemoteError::Kind::ServerVocabMismatch);
  CHECK_THROWS_AS(HttpTransport("localhost:80"), RemoteError);
}

TEST_CASE("remote model over HTTP") {
  const std::vector<std::string> vocab{"a", "b", "c"};
  httplib::Server server;
  server.Post("/logprobs", [&](const httplib::Request& req, httplib::Response& res) {
    const auto reply = uniform_reply(vocab, json::parse(req.body));
    res.status = json::parse(reply).contains("error") ? 400 : 200;
    res.set_content(reply, "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteModelConfig rc;
  rc.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/logprobs";
  RemoteTokenModel m(rc, nullptr);
  const std::vector<std::string> ctx{"a"};
  CHECK(m.logprob(ctx, "b") == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(m.logprob(ctx, "zzz") == -std::numeric_limits<double>::infinity());

  rc.top_k = 10;
  RemoteTokenModel over(rc, nullptr);
  try {
    over.next_logprobs(ctx);
    FAIL("expected an error response");
  } catch (const RemoteError& e) {
    CHECK(e.kind() == RemoteError::Kind::MalformedResponse);
  }

  server.stop();
  th.join();
  RemoteTokenModel down(rc, nullptr);
  try {
    down.next_logprobs(ctx);
    FAIL("expected a transport error");
  } catch (const RemoteError& e) {
    CHECK(e.kind() == RemoteError::Kind::Transport);
  }
}
