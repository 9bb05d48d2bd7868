#include <cmath>
#include <random>

#include "doctest.h"
#include "subplan/planner.hpp"
#include "subplan/reranker.hpp"

using namespace subplan;

namespace {

Catalog shipped() { return Catalog::load(SUBPLAN_DATA_DIR "/catalog.tsv"); }

Hypothesis hyp(const Catalog& c, std::string_view text, double fwd,
               std::optional<double> rev = std::nullopt) {
  Hypothesis h;
  h.plan = parse(text, c);
  h.logp_forward = fwd;
  h.logp_reverse = rev;
  return h;
}

std::vector<std::string> texts(const std::vector<Hypothesis>& hs) {
  std::vector<std::string> out;
  for (const auto& h : hs) out.push_back(h.text());
  return out;
}

// Distinct plans over a catalog, one per index.
std::string plan_text(const Catalog& c, std::size_t i) {
  return serialize({{{kAllActions[i % 7], c[i / 7 % c.size()]}}});
}

TrainingPair tp(const Catalog& c, std::string instr, std::string_view plan) {
  return {std::move(instr), parse(plan, c)};
}

}  // namespace

TEST_CASE("combined score arithmetic") {
  CHECK(combined_score(-2.4, -9.1, 0.5) == doctest::Approx(-5.75).epsilon(1e-15));
  CHECK(combined_score(-2.4, -9.1, 0.0) == -2.4);
  CHECK(combined_score(-2.4, -9.1, 1.0) == -9.1);
}

TEST_CASE("criterion names and validation") {
  CHECK(RankCriterion::from_name("forward").kind == CriterionKind::Forward);
  CHECK(RankCriterion::from_name("reverse").kind == CriterionKind::Reverse);
  CHECK(RankCriterion::from_name("wmi", 0.25).lambda == 0.25);
  CHECK(RankCriterion::weighted_mi(0.5).name() == "wmi(0.5)");
  CHECK_THROWS_AS(RankCriterion::from_name("bleu"), std::invalid_argument);
  CHECK_THROWS_AS(RankCriterion::weighted_mi(1.5), std::invalid_argument);
  CHECK_THROWS_AS(RankCriterion::weighted_mi(-0.1), std::invalid_argument);
  CHECK_FALSE(RankCriterion::forward().needs_reverse());
}

TEST_CASE("forward ranking with the reported score pairs") {
  const auto c = shipped();
  const std::string a = "pick up fork, put in cup, pick up cup, put in sink.";
  const std::string b = "pick up fork, put in cup, pick up cup, put in table.";
  auto with = rank({hyp(c, b, -4.3), hyp(c, a, -2.4)}, RankCriterion::forward());
  CHECK(texts(with) == std::vector<std::string>{a, b});
  auto without = rank({hyp(c, a, -13.7), hyp(c, b, -9.1)}, RankCriterion::forward());
  CHECK(texts(without) == std::vector<std::string>{b, a});
  CHECK(*with.front().combined == -2.4);
}

TEST_CASE("weighted MI order is invariant to shifting reverse scores") {
  // Dyadic scores keep every sum exact, so even ties must survive the shift.
  const auto c = shipped();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 2 + rng() % 10;
    const double lambda = static_cast<double>(rng() % 9) / 8.0;
    const double shift = (static_cast<double>(rng() % 4096) - 2048.0) / 64.0;
    std::vector<Hypothesis> base, shifted;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = -static_cast<double>(rng() % 640) / 64.0;
      const double r = -static_cast<double>(rng() % 640) / 64.0;
      base.push_back(hyp(c, plan_text(c, i), f, r));
      shifted.push_back(hyp(c, plan_text(c, i), f, r + shift));
    }
    const auto crit = RankCriterion::weighted_mi(lambda);
    CHECK(texts(rank(base, crit)) == texts(rank(shifted, crit)));
  }
}

TEST_CASE("lambda 0 and 1 reduce to forward and reverse orderings") {
  const auto c = shipped();
  std::uniform_real_distribution<double> u(-30.0, 0.0);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Hypothesis> hs;
    for (std::size_t i = 0; i < 10; ++i) hs.push_back(hyp(c, plan_text(c, i), u(rng), u(rng)));
    CHECK(texts(rank(hs, RankCriterion::weighted_mi(0.0))) ==
          texts(rank(hs, RankCriterion::forward())));
    CHECK(texts(rank(hs, RankCriterion::weighted_mi(1.0))) ==
          texts(rank(hs, RankCriterion::reverse())));
  }
}

TEST_CASE("top-1 as a function of lambda changes at finitely many breakpoints") {
  // Each hypothesis' score is linear in lambda, so along a grid a plan holds
  // the top spot over one contiguous stretch at most.
  const auto c = shipped();
  std::uniform_real_distribution<double> u(-30.0, 0.0);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Hypothesis> hs;
    for (std::size_t i = 0; i < 8; ++i) hs.push_back(hyp(c, plan_text(c, i), u(rng), u(rng)));
    std::vector<std::string> leaders;
    for (int g = 0; g <= 200; ++g) {
      const auto top = rank(hs, RankCriterion::weighted_mi(g / 200.0)).front().text();
      if (leaders.empty() || leaders.back() != top) leaders.push_back(top);
    }
    CHECK(leaders.size() <= hs.size());
    std::set<std::string> unique(leaders.begin(), leaders.end());
    CHECK(unique.size() == leaders.size());
  }
}

TEST_CASE("ties fall back to text order and stay stable") {
  const auto c = shipped();
  std::vector<Hypothesis> hs{hyp(c, "pick up egg.", -1.0, -2.0), hyp(c, "pick up apple.", -1.0, -2.0),
                             hyp(c, "pick up cup.", -1.0, -2.0)};
  const std::vector<std::string> expected{"pick up apple.", "pick up cup.", "pick up egg."};
  for (const auto& crit : {RankCriterion::forward(), RankCriterion::reverse(),
                           RankCriterion::weighted_mi(0.5)})
    CHECK(texts(rank(hs, crit)) == expected);
}

TEST_CASE("missing reverse scores") {
  const auto c = shipped();
  std::vector<Hypothesis> hs{hyp(c, "pick up egg.", -1.0), hyp(c, "pick up apple.", -2.0)};
  CHECK_NOTHROW(rank(hs, RankCriterion::forward()));
  CHECK_THROWS_AS(rank(hs, RankCriterion::weighted_mi(0.5)), MissingScore);
  CHECK_THROWS_AS(rank(hs, RankCriterion::reverse()), MissingScore);

  UniformTokenModel m({"get", "the", "egg", "apple"});
  const ReverseScorer scorer{m, {}, "get the egg"};
  const auto ranked = rank(hs, RankCriterion::weighted_mi(0.5), &scorer);
  for (const auto& h : ranked) {
    REQUIRE(h.logp_reverse);
    CHECK(*h.logp_reverse == doctest::Approx(3 * std::log(0.25)));
    CHECK(*h.combined == doctest::Approx(0.5 * h.logp_forward + 0.5 * *h.logp_reverse));
  }
}

TEST_CASE("uniform reverse score depends only on instruction length") {
  const auto c = shipped();
  UniformTokenModel m({"a", "b", "c", "d", "e"});
  const std::vector<TrainingPair> pairs{tp(c, "a b", "pick up egg.")};
  const double r1 = score_reverse(m, pairs, parse("pick up egg.", c), "a b c");
  const double r2 = score_reverse(m, pairs, parse("slice apple, pick up cup.", c), "a b c");
  CHECK(r1 == r2);
  CHECK(r1 == doctest::Approx(3 * std::log(0.2)));
}

TEST_CASE("reverse score favors the gold instruction") {
  const auto c = shipped();
  const std::vector<TrainingPair> pairs{tp(c, "warm the egg", "pick up egg, heat in microwave.")};
  const auto model = fit_prompt_model(pairs, c, {3});
  const auto plan = pairs[0].plan;
  const double gold = score_reverse(model, pairs, plan, "warm the egg");
  for (const auto* other : {"chill the egg", "warm the cup", "slice the apple"})
    CHECK(gold > score_reverse(model, pairs, plan, other));
}

namespace {

std::vector<TrainingPair> table_examples(const Catalog& c) {
  return {
      tp(c, "put a pencil in a bowl and set it on the table",
         "pick up pencil, put in bowl, pick up bowl, put in table."),
      tp(c, "set the apple on the table", "pick up apple, put in table."),
      tp(c, "move the spoon into the pot", "pick up spoon, put in pot."),
  };
}

// Examples that move things into the sink, phrased like the query below.
std::vector<TrainingPair> with_sink_examples(const Catalog& c) {
  auto pairs = table_examples(c);
  pairs.push_back(tp(c, "place a cup with a spoon in it in the sink",
                     "pick up spoon, put in cup, pick up cup, put in sink."));
  pairs.push_back(tp(c, "put a bowl with a knife in it in the sink",
                     "pick up knife, put in bowl, pick up bowl, put in sink."));
  pairs.push_back(tp(c, "leave the cup in the sink", "pick up cup, put in sink."));
  pairs.push_back(tp(c, "drop a fork in the sink", "pick up fork, put in sink."));
  pairs.push_back(tp(c, "put the pot with a ladle in it in the sink",
                     "pick up ladle, put in pot, pick up pot, put in sink."));
  return pairs;
}

const std::string kQuery = "place a cup with a fork in it on the table";
const std::string kSinkPlan = "pick up fork, put in cup, pick up cup, put in sink.";
const std::string kTablePlan = "pick up fork, put in cup, pick up cup, put in table.";

std::vector<std::string> forward_order(const Catalog& c, const TokenModel& model,
                                       const std::vector<TrainingPair>& pairs) {
  const auto prompt = build_prompt_forward(pairs, kQuery);
  std::vector<Hypothesis> hs{hyp(c, kSinkPlan, score_continuation(model, prompt, kSinkPlan)),
                             hyp(c, kTablePlan, score_continuation(model, prompt, kTablePlan))};
  return texts(rank(hs, RankCriterion::forward()));
}

}  // namespace

TEST_CASE("distractor receptacle examples flip the forward ranking") {
  const auto c = shipped();
  const std::vector<std::string> sink_first{kSinkPlan, kTablePlan};
  const std::vector<std::string> table_first{kTablePlan, kSinkPlan};
  for (int order : {2, 3, 4}) {
    const auto with = with_sink_examples(c);
    const auto without = table_examples(c);
    CHECK(forward_order(c, fit_prompt_model(with, c, {order}), with) == sink_first);
    CHECK(forward_order(c, fit_prompt_model(without, c, {order}), without) == table_first);
  }
}

TEST_CASE("query-adapted retrieval resists the distractor examples") {
  const auto c = shipped();
  const Environment env(c);
  const std::vector<std::string> table_first{kTablePlan, kSinkPlan};
  for (const auto& pairs : {with_sink_examples(c), table_examples(c)}) {
    const auto model = make_model(ModelSpec{}, pairs, c, env.affordances());
    CHECK(forward_order(c, *model, pairs) == table_first);
  }
}
