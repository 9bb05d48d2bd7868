#include "subplan/ranker.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "subplan/hash.hpp"
#include "subplan/io.hpp"
#include "subplan/parallel.hpp"

namespace subplan {

using nlohmann::json;

HashedNgramFeaturizer::HashedNgramFeaturizer(std::size_t dim, bool cross)
    : dim_(dim), cross_(cross) {
  if (dim == 0) throw std::invalid_argument("featurizer dimension must be positive");
}

void HashedNgramFeaturizer::add(std::vector<double>& v, std::string_view feature) const {
  const auto h = fnv1a(feature);
  v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
}

std::vector<double> HashedNgramFeaturizer::encode(std::string_view instruction,
                                                  std::string_view serialized_plan) const {
  const auto instr = tokenizer_.encode(instruction);
  const auto plan = tokenizer_.encode(serialized_plan);
  Tokens seq = instr;
  seq.emplace_back("[SEP]");
  seq.insert(seq.end(), plan.begin(), plan.end());

  std::vector<double> v(dim_, 0.0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    add(v, "u:" + seq[i]);
    if (i + 1 < seq.size()) add(v, "b:" + seq[i] + ' ' + seq[i + 1]);
  }
  if (cross_) {
    const std::set<std::string> a(instr.begin(), instr.end());
    std::set<std::string> b;
    for (const auto& t : plan)
      if (t != "," && t != ".") b.insert(t);
    for (const auto& x : a)
      for (const auto& y : b) add(v, "x:" + x + '|' + y);
  }
  return v;
}

std::string HashedNgramFeaturizer::spec() const {
  return "hashed:" + std::to_string(dim_) + (cross_ ? ":cross" : "");
}

std::unique_ptr<TextFeaturizer> make_featurizer(std::string_view spec) {
  auto fail = [&] {
    return std::invalid_argument("unknown featurizer '" + std::string(spec) +
                                 "' (expected hashed:<dim>[:cross])");
  };
  if (!spec.starts_with("hashed:")) throw fail();
  auto rest = spec.substr(7);
  bool cross = false;
  if (rest.ends_with(":cross")) {
    cross = true;
    rest.remove_suffix(6);
  }
  std::size_t dim = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), dim);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || dim == 0) throw fail();
  return std::make_unique<HashedNgramFeaturizer>(dim, cross);
}

RankerParams RankerParams::zeros(std::size_t state_dim, std::size_t text_dim,
                                 std::string featurizer) {
  RankerParams p;
  p.state_dim = state_dim;
  p.text_dim = text_dim;
  p.featurizer = std::move(featurizer);
  p.theta.assign(state_dim + text_dim, 0.0);
  return p;
}

void RankerParams::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "subplan-ranker 1\n"
     << "state_dim " << state_dim << '\n'
     << "text_dim " << text_dim << '\n'
     << "featurizer " << featurizer << '\n';
  os.precision(17);
  for (double x : theta) os << x << '\n';
  write_file_atomic(path, os.str());
}

RankerParams RankerParams::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ranker params '" + path.string() + "'");
  auto bad = [&](const std::string& what) {
    return RankerError(RankerError::Kind::InvalidParams, path.string() + ": " + what);
  };
  std::string magic, key;
  int version = 0;
  RankerParams p;
  if (!(in >> magic >> version) || magic != "subplan-ranker" || version != 1)
    throw bad("not a ranker params file");
  if (!(in >> key >> p.state_dim) || key != "state_dim") throw bad("missing state_dim");
  if (!(in >> key >> p.text_dim) || key != "text_dim") throw bad("missing text_dim");
  if (!(in >> key >> p.featurizer) || key != "featurizer") throw bad("missing featurizer");
  double x;
  while (in >> x) {
    if (!std::isfinite(x)) throw bad("non-finite parameter");
    p.theta.push_back(x);
  }
  if (!in.eof()) throw bad("unparseable parameter value");
  if (p.theta.size() != p.state_dim + p.text_dim) throw bad("parameter count mismatch");
  return p;
}

double f_score(std::span<const double> state_features, std::span<const double> text_features,
               const RankerParams& params) {
  if (state_features.size() != params.state_dim || text_features.size() != params.text_dim ||
      params.theta.size() != params.state_dim + params.text_dim)
    throw RankerError(RankerError::Kind::DimensionMismatch,
                      "features (" + std::to_string(state_features.size()) + " + " +
                          std::to_string(text_features.size()) + ") do not match parameters (" +
                          std::to_string(params.state_dim) + " + " +
                          std::to_string(params.text_dim) + ")");
  const auto* th = params.theta.data();
  double s = std::inner_product(state_features.begin(), state_features.end(), th, 0.0);
  return std::inner_product(text_features.begin(), text_features.end(), th + params.state_dim, s);
}

StateEncoder StateEncoder::identity(std::size_t catalog_size) {
  return {catalog_size, StateProjection::identity(catalog_size)};
}

std::vector<Candidate> to_candidates(std::span<const Hypothesis> ranked) {
  std::vector<Candidate> out;
  out.reserve(ranked.size());
  for (const auto& h : ranked)
    out.push_back({h.plan, h.logp_forward, h.logp_reverse.value_or(0.0),
                   h.combined.value_or(h.logp_forward)});
  return out;
}

std::vector<FeedbackExample> collect_feedback(std::span<const EpisodeTask> tasks,
                                              const ProposeFn& propose, const Environment& env,
                                              const StateEncoder& encoder,
                                              const CollectConfig& config) {
  std::vector<std::vector<FeedbackExample>> per_task(tasks.size());
  parallel_for(tasks.size(), config.threads, [&](std::size_t t) {
    const auto& task = *tasks[t].task;
    const auto& scene = *tasks[t].scene;
    const auto candidates = to_candidates(propose(task.instruction));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto s = env.reset(scene, task);
      std::vector<std::vector<double>> visited{encoder.encode(s)};
      for (const auto& g : candidates[i].plan.steps) {
        s = env.execute(s, g).first;
        visited.push_back(encoder.encode(s));
      }
      if (env.reward(task, s) <= 0) continue;
      for (std::size_t j = 0; j < visited.size(); ++j)
        per_task[t].push_back({task.id, task.instruction, candidates, i, j, std::move(visited[j])});
      break;
    }
  });
  std::vector<FeedbackExample> out;
  for (auto& v : per_task)
    for (auto& e : v) out.push_back(std::move(e));
  return out;
}

std::string feedback_to_json_line(const FeedbackExample& e) {
  json cands = json::array();
  for (const auto& c : e.candidates)
    cands.push_back({{"plan", serialize(c.plan)},
                     {"forward", c.logp_forward},
                     {"reverse", c.logp_reverse},
                     {"combined", c.combined}});
  json j = {{"task", e.task_id},       {"instruction", e.instruction}, {"candidates", cands},
            {"success", e.success_index}, {"step", e.state_step},   {"state", e.state}};
  return j.dump();
}

FeedbackExample feedback_from_json_line(std::string_view line, const Catalog& catalog) {
  try {
    const auto j = json::parse(line);
    FeedbackExample e;
    e.task_id = j.value("task", "");
    e.instruction = j.at("instruction").get<std::string>();
    for (const auto& c : j.at("candidates"))
      e.candidates.push_back({parse(c.at("plan").get<std::string>(), catalog),
                              c.value("forward", 0.0), c.value("reverse", 0.0),
                              c.value("combined", 0.0)});
    e.success_index = j.at("success").get<std::size_t>();
    e.state_step = j.value("step", std::size_t{0});
    e.state = j.at("state").get<std::vector<double>>();
    if (e.success_index >= e.candidates.size())
      throw RankerError(RankerError::Kind::InvalidParams, "success index out of range");
    return e;
  } catch (const json::exception& ex) {
    throw RankerError(RankerError::Kind::InvalidParams, std::string("feedback record: ") + ex.what());
  }
}

std::vector<EncodedExample> encode_dataset(std::span<const FeedbackExample> data,
                                           const TextFeaturizer& featurizer) {
  using Texts = std::vector<std::vector<double>>;
  std::map<std::string, std::shared_ptr<const Texts>> cache;
  std::vector<EncodedExample> out;
  out.reserve(data.size());
  for (const auto& e : data) {
    std::string key = e.instruction;
    for (const auto& c : e.candidates) key += '\n' + serialize(c.plan);
    auto& texts = cache[key];
    if (!texts) {
      auto t = std::make_shared<Texts>();
      for (const auto& c : e.candidates) t->push_back(featurizer.encode(e.instruction, serialize(c.plan)));
      texts = std::move(t);
    }
    out.push_back({e.state, texts, e.success_index});
  }
  return out;
}

double ranking_loss(std::span<const EncodedExample> data, const RankerParams& params,
                    std::vector<double>* gradient) {
  if (gradient) gradient->assign(params.theta.size(), 0.0);
  double loss = 0.0;
  std::vector<double> z, p;
  for (const auto& e : data) {
    const auto& texts = *e.texts;
    z.resize(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) z[i] = f_score(e.state, texts[i], params);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double zi : z) sum += std::exp(zi - m);
    const double lse = m + std::log(sum);
    loss -= z[e.positive] - lse;
    if (!gradient) continue;
    // d/dtheta of (lse - z_pos) = sum_i p_i x_i - x_pos
    auto& g = *gradient;
    p.resize(z.size());
    double state_coef = -1.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      p[i] = std::exp(z[i] - lse);
      state_coef += p[i];
    }
    for (std::size_t d = 0; d < params.state_dim; ++d) g[d] += state_coef * e.state[d];
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const double c = p[i] - (i == e.positive ? 1.0 : 0.0);
      if (c == 0.0) continue;
      for (std::size_t d = 0; d < params.text_dim; ++d) g[params.state_dim + d] += c * texts[i][d];
    }
  }
  return loss;
}

TrainResult train(std::span<const FeedbackExample> data, const TextFeaturizer& featurizer,
                  const RankerParams& init, const TrainConfig& config) {
  if (data.empty())
    throw RankerError(RankerError::Kind::EmptyDataset,
                      "no feedback examples: no candidate plan succeeded on any instruction; "
                      "raise the feedback budget or beam size");
  if (init.text_dim != featurizer.dim() || init.theta.size() != init.state_dim + init.text_dim)
    throw RankerError(RankerError::Kind::DimensionMismatch,
                      "initial parameters do not match the featurizer dimension");
  const auto encoded = encode_dataset(data, featurizer);
  TrainResult r{init, {}};
  const double scale =
      config.step_size / (config.mean_gradient ? static_cast<double>(encoded.size()) : 1.0);
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    r.epoch_loss.push_back(ranking_loss(encoded, r.params, &grad));
    for (std::size_t d = 0; d < grad.size(); ++d) r.params.theta[d] -= scale * grad[d];
  }
  return r;
}

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::StopMarker: return "stop";
    case StopReason::NoCandidates: return "no_candidates";
    case StopReason::StepLimit: return "step_limit";
  }
  return "?";
}

Episode rollout(std::span<const SubgoalSequence> candidates, std::string_view instruction,
                const Scene& scene, const TaskSpec& task, const RolloutContext& ctx) {
  std::vector<std::vector<double>> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(ctx.featurizer.encode(instruction, serialize(c)));

  Episode ep;
  AgentState s = ctx.env.reset(scene, task);
  std::vector<std::size_t> G(candidates.size());
  std::iota(G.begin(), G.end(), 0);
  std::size_t i = 0;
  std::size_t attempts = 0;

  auto best = [&]() -> std::size_t {
    const auto state = ctx.encoder.encode(s);
    std::size_t arg = 0;
    double top = -INFINITY;
    for (std::size_t j = 0; j < G.size(); ++j) {
      const double f = f_score(state, texts[G[j]], ctx.params);
      if (j == 0 || f > top) {
        top = f;
        arg = j;
      }
    }
    return arg;
  };

  while (true) {
    if (G.empty()) {
      ep.stop = StopReason::NoCandidates;
      break;
    }
    const std::size_t pos = best();
    const std::size_t g = G[pos];
    ep.final_plan = g;
    const auto step = step_at(candidates[g], i);
    if (is_stop(step) && candidates[g].terminated) {
      ep.stop = StopReason::StopMarker;
      break;
    }
    if (attempts == ctx.i_thresh) {
      ep.stop = StopReason::StepLimit;
      break;
    }
    if (is_stop(step)) {
      // An unterminated plan that ran out of subgoals has nothing to propose.
      G.erase(G.begin() + static_cast<std::ptrdiff_t>(pos));
      continue;
    }
    ++attempts;
    auto [next, outcome] = ctx.env.execute(s, *step);
    if (outcome.success) {
      s = std::move(next);
      std::erase_if(G, [&](std::size_t h) { return step_at(candidates[h], i) != step; });
      ++i;
    } else {
      G.erase(G.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    ep.steps.push_back({*step, g, outcome.success, outcome.reason, G.size()});
  }
  ep.reward = ctx.env.reward(task, s);
  ep.goal_fraction = ctx.env.goal_condition_fraction(task, s);
  ep.final_state = std::move(s);
  return ep;
}

std::string SuccessRates::to_string() const {
  if (episodes == 0) return "no episodes";
  std::ostringstream os;
  os << "task " << task_rate << " goal-cond " << goal_condition_rate << " over " << episodes
     << " episodes";
  return os.str();
}

SuccessRates summarize(std::span<const Episode> episodes) {
  SuccessRates r;
  r.episodes = episodes.size();
  if (episodes.empty()) return r;
  for (const auto& e : episodes) {
    r.task_rate += e.reward;
    r.goal_condition_rate += e.goal_fraction;
  }
  r.task_rate /= static_cast<double>(episodes.size());
  r.goal_condition_rate /= static_cast<double>(episodes.size());
  return r;
}

PolicyRun policy_success_rate(std::span<const EpisodeTask> tasks, const ProposeFn& propose,
                              const RolloutContext& ctx, std::size_t threads) {
  PolicyRun run;
  run.episodes.resize(tasks.size());
  run.candidates.resize(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = *tasks[t].task;
    auto& cands = run.candidates[t];
    if (propose) {
      for (const auto& h : propose(task.instruction)) cands.push_back(h.plan);
    } else if (task.oracle_plan) {
      cands.push_back(*task.oracle_plan);
    }
    run.episodes[t] = rollout(cands, task.instruction, *tasks[t].scene, task, ctx);
  });
  run.rates = summarize(run.episodes);
  return run;
}

}  // namespace subplan
