#include "subplan/planner.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace subplan {

std::vector<TrainingPair> sample_prompt(std::span<const PoolEntry> pool, std::size_t n,
                                        std::uint64_t seed) {
  if (n > pool.size())
    throw InsufficientPool("requested " + std::to_string(n) + " prompt examples but the pool has " +
                           std::to_string(pool.size()));
  std::map<std::string, std::vector<const TrainingPair*>> by_type;
  for (const auto& e : pool) by_type[e.task_type].push_back(&e.pair);
  std::mt19937_64 gen(seed);
  for (auto& [type, entries] : by_type)
    for (std::size_t i = entries.size(); i > 1; --i)
      std::swap(entries[i - 1], entries[static_cast<std::size_t>(gen() % i)]);

  std::vector<TrainingPair> out;
  out.reserve(n);
  for (std::size_t round = 0; out.size() < n; ++round)
    for (auto& [type, entries] : by_type)
      if (round < entries.size() && out.size() < n) out.push_back(*entries[round]);
  return out;
}

std::vector<std::string> affordance_corpus(const Catalog& catalog, const Affordances& aff) {
  std::vector<std::string> out;
  for (const auto& o : catalog.objects()) {
    auto add = [&](ActionType a) {
      const auto v = verbalize({a, o});
      out.push_back(v + std::string(kSeparator));
      if (a == ActionType::Put || a == ActionType::ToggleOn) out.push_back(v + std::string(kStopMarker));
    };
    if (aff.pickupable.contains(o.id)) add(ActionType::Pickup);
    if (aff.receptacles.contains(o.id)) add(ActionType::Put);
    if (aff.heaters.contains(o.id)) add(ActionType::Heat);
    if (aff.coolers.contains(o.id)) add(ActionType::Cool);
    if (aff.cleaners.contains(o.id)) add(ActionType::Clean);
    if (aff.sliceable.contains(o.id)) add(ActionType::Slice);
    if (aff.toggleable.contains(o.id)) add(ActionType::ToggleOn);
  }
  return out;
}

std::shared_ptr<const TokenModel> make_model(const ModelSpec& spec,
                                             std::span<const TrainingPair> prompt_pairs,
                                             const Catalog& catalog,
                                             const Affordances& affordances) {
  if (spec.kind == "ngram") {
    std::vector<std::string> background;
    if (spec.affordance_prior) background = affordance_corpus(catalog, affordances);
    return std::make_shared<NGramModel>(
        fit_prompt_model(prompt_pairs, catalog, spec.ngram, background));
  }
  if (spec.kind == "remote") return std::make_shared<RemoteTokenModel>(spec.remote, nullptr);
  throw std::invalid_argument("unknown model kind '" + spec.kind + "' (expected ngram or remote)");
}

Planner::Planner(Catalog catalog, std::vector<TrainingPair> prompt_pairs,
                 std::shared_ptr<const TokenModel> model, PlannerConfig config)
    : catalog_(std::move(catalog)),
      pairs_(std::move(prompt_pairs)),
      model_(std::move(model)),
      config_(config),
      trie_(PrefixTrie::build(catalog_, model_->tokenizer())) {}

std::vector<Hypothesis> Planner::decode(std::string_view instruction) const {
  return beam_search(*model_, build_prompt_forward(pairs_, instruction), trie_, catalog_,
                     config_.beam);
}

std::vector<Hypothesis> Planner::propose(std::string_view instruction) const {
  auto hyps = decode(instruction);
  const ReverseScorer scorer{*model_, pairs_, std::string(instruction)};
  scorer.fill(hyps);
  return rank(std::move(hyps), config_.criterion, &scorer);
}

}  // namespace subplan
