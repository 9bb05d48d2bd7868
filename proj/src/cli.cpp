#include "subplan/cli.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "subplan/eval.hpp"
#include "subplan/hash.hpp"
#include "subplan/io.hpp"

namespace subplan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok |= key == a;
    if (!ok) throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
  }
}

std::string dotted(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

template <class T>
T read(const json& obj, const std::string& prefix, std::string_view key, T fallback) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return fallback;
  const auto field = dotted(prefix, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ConfigError(field, "expected a boolean");
    return it->get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ConfigError(field, "expected a string");
    return it->get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw ConfigError(field, "expected a number");
    const auto v = it->get<double>();
    if (!std::isfinite(v)) throw ConfigError(field, "expected a finite number");
    return v;
  } else {
    if (!it->is_number_unsigned())
      throw ConfigError(field, "expected a non-negative integer");
    return static_cast<T>(it->get<std::uint64_t>());
  }
}

template <class T>
std::vector<T> read_list(const json& obj, const std::string& prefix, std::string_view key,
                         std::vector<T> fallback) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return fallback;
  const auto field = dotted(prefix, key);
  if (!it->is_array()) throw ConfigError(field, "expected a list");
  std::vector<T> out;
  for (const auto& v : *it) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field, "expected a list of numbers");
      out.push_back(v.get<double>());
    } else {
      if (!v.is_number_unsigned())
        throw ConfigError(field, "expected a list of non-negative integers");
      out.push_back(static_cast<T>(v.get<std::uint64_t>()));
    }
  }
  return out;
}

template <class T>
std::optional<T> read_optional(const json& obj, const std::string& prefix, std::string_view key) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return read<T>(obj, prefix, key, T{});
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

const json& section(const json& root, std::string_view key) {
  static const json empty = json::object();
  const auto it = root.find(std::string(key));
  return it == root.end() || it->is_null() ? empty : *it;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "",
             {"catalog", "scenes", "tasks", "train_pairs", "output_dir", "threads", "model", "beam",
              "criterion", "prompt", "feedback", "eval", "sweep", "generate"});
  RunConfig c;
  c.raw = j;
  if (auto s = read_optional<std::string>(j, "", "catalog")) c.catalog = resolve(base_dir, *s);
  if (auto s = read_optional<std::string>(j, "", "scenes")) c.scenes = resolve(base_dir, *s);
  if (auto s = read_optional<std::string>(j, "", "tasks")) c.tasks = resolve(base_dir, *s);
  if (auto s = read_optional<std::string>(j, "", "train_pairs"))
    c.train_pairs = resolve(base_dir, *s);
  if (auto s = read_optional<std::string>(j, "", "output_dir"))
    c.output_dir = resolve(base_dir, *s);
  c.threads = read<std::size_t>(j, "", "threads", 0);

  {
    const auto& m = section(j, "model");
    check_keys(m, "model",
               {"kind", "order", "weights", "unigram_add", "cache_boost", "cache_window",
                "retrieval_weight", "retrieval_sharpness", "retrieval_order", "affordance_prior", "endpoint", "top_k"});
    auto& ng = c.model.ngram;
    c.model.kind = read<std::string>(m, "model", "kind", c.model.kind);
    if (c.model.kind != "ngram" && c.model.kind != "remote")
      throw ConfigError("model.kind", "expected \"ngram\" or \"remote\"");
    ng.order = static_cast<int>(read<std::size_t>(m, "model", "order", ng.order));
    if (ng.order < 1) throw ConfigError("model.order", "must be >= 1");
    const bool order_given = m.contains("order");
    ng.weights = read_list<double>(m, "model", "weights", order_given ? std::vector<double>{}
                                                                      : ng.weights);
    if (!ng.weights.empty() && ng.weights.size() != static_cast<std::size_t>(ng.order))
      throw ConfigError("model.weights", "needs one weight per order");
    for (auto w : ng.weights)
      if (!(w >= 0.0)) throw ConfigError("model.weights", "weights must be >= 0");
    ng.unigram_add = read<double>(m, "model", "unigram_add", ng.unigram_add);
    if (!(ng.unigram_add > 0.0)) throw ConfigError("model.unigram_add", "must be > 0");
    ng.cache_boost = read<double>(m, "model", "cache_boost", ng.cache_boost);
    if (ng.cache_boost < 0.0) throw ConfigError("model.cache_boost", "must be >= 0");
    ng.cache_window = read<std::size_t>(m, "model", "cache_window", ng.cache_window);
    ng.retrieval_weight = read<double>(m, "model", "retrieval_weight", ng.retrieval_weight);
    if (ng.retrieval_weight < 0.0 || ng.retrieval_weight > 1.0)
      throw ConfigError("model.retrieval_weight", "must lie in [0, 1]");
    ng.retrieval_sharpness =
        read<double>(m, "model", "retrieval_sharpness", ng.retrieval_sharpness);
    if (ng.retrieval_sharpness < 0.0)
      throw ConfigError("model.retrieval_sharpness", "must be >= 0");
    ng.retrieval_order = static_cast<int>(
        read<std::size_t>(m, "model", "retrieval_order", ng.retrieval_order));
    if (ng.retrieval_order < 1) throw ConfigError("model.retrieval_order", "must be >= 1");
    c.model.affordance_prior = read<bool>(m, "model", "affordance_prior", c.model.affordance_prior);
    c.model.remote.endpoint = read<std::string>(m, "model", "endpoint", c.model.remote.endpoint);
    c.model.remote.top_k = static_cast<int>(read<std::size_t>(m, "model", "top_k", 0));
    if (c.model.kind == "remote" && c.model.remote.endpoint.empty())
      throw ConfigError("model.endpoint", "required when model.kind is \"remote\"");
  }
  {
    const auto& b = section(j, "beam");
    check_keys(b, "beam", {"beam_size", "max_subgoals", "context_budget"});
    c.beam.beam_size = read<std::size_t>(b, "beam", "beam_size", c.beam.beam_size);
    c.beam.max_subgoals = read<std::size_t>(b, "beam", "max_subgoals", c.beam.max_subgoals);
    c.beam.context_budget = read<std::size_t>(b, "beam", "context_budget", c.beam.context_budget);
    if (c.beam.beam_size < 1) throw ConfigError("beam.beam_size", "must be >= 1");
    if (c.beam.max_subgoals < 1) throw ConfigError("beam.max_subgoals", "must be >= 1");
  }
  {
    const auto& r = section(j, "criterion");
    check_keys(r, "criterion", {"kind", "lambda"});
    const auto kind = read<std::string>(r, "criterion", "kind", "wmi");
    const auto lambda = read<double>(r, "criterion", "lambda", 0.5);
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("criterion.lambda", "must lie in [0, 1]");
    try {
      c.criterion = RankCriterion::from_name(kind, lambda);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("criterion.kind", e.what());
    }
  }
  {
    const auto& p = section(j, "prompt");
    check_keys(p, "prompt", {"n", "seed", "split"});
    c.prompt_n = read<std::size_t>(p, "prompt", "n", c.prompt_n);
    c.prompt_seed = read<std::uint64_t>(p, "prompt", "seed", c.prompt_seed);
    c.prompt_split = read<std::string>(p, "prompt", "split", c.prompt_split);
  }
  {
    const auto& f = section(j, "feedback");
    check_keys(f, "feedback",
               {"split", "budget", "epochs", "step_size", "featurizer", "i_thresh"});
    c.feedback_split = read<std::string>(f, "feedback", "split", c.feedback_split);
    c.feedback_budget = read_optional<std::size_t>(f, "feedback", "budget");
    c.train.epochs = read<std::size_t>(f, "feedback", "epochs", c.train.epochs);
    c.train.step_size = read<double>(f, "feedback", "step_size", c.train.step_size);
    if (!(c.train.step_size > 0.0)) throw ConfigError("feedback.step_size", "must be > 0");
    c.featurizer = read<std::string>(f, "feedback", "featurizer", c.featurizer);
    try {
      make_featurizer(c.featurizer);
    } catch (const std::exception& e) {
      throw ConfigError("feedback.featurizer", e.what());
    }
    c.i_thresh = read<std::size_t>(f, "feedback", "i_thresh", c.i_thresh);
    if (c.i_thresh < 1) throw ConfigError("feedback.i_thresh", "must be >= 1");
  }
  {
    const auto& e = section(j, "eval");
    check_keys(e, "eval", {"split", "k", "limit", "params"});
    c.eval_split = read<std::string>(e, "eval", "split", c.eval_split);
    c.k = read<std::size_t>(e, "eval", "k", c.k);
    if (c.k < 1) throw ConfigError("eval.k", "must be >= 1");
    c.eval_limit = read_optional<std::size_t>(e, "eval", "limit");
    if (auto s = read_optional<std::string>(e, "eval", "params")) c.params = resolve(base_dir, *s);
  }
  {
    const auto& s = section(j, "sweep");
    check_keys(s, "sweep", {"n_values", "seeds"});
    c.sweep_n = read_list<std::size_t>(s, "sweep", "n_values", c.sweep_n);
    c.sweep_seeds = read_list<std::uint64_t>(s, "sweep", "seeds", c.sweep_seeds);
    if (c.sweep_seeds.empty()) throw ConfigError("sweep.seeds", "needs at least one seed");
  }
  {
    const auto& g = section(j, "generate");
    check_keys(g, "generate",
               {"seed", "train_per_type", "feedback_per_type", "eval_per_type", "ambiguity_rate"});
    auto& gc = c.generate;
    gc.seed = read<std::uint64_t>(g, "generate", "seed", gc.seed);
    gc.train_per_type = read<std::size_t>(g, "generate", "train_per_type", gc.train_per_type);
    gc.feedback_per_type =
        read<std::size_t>(g, "generate", "feedback_per_type", gc.feedback_per_type);
    gc.eval_per_type = read<std::size_t>(g, "generate", "eval_per_type", gc.eval_per_type);
    gc.ambiguity_rate = read<double>(g, "generate", "ambiguity_rate", gc.ambiguity_rate);
    if (gc.ambiguity_rate < 0.0 || gc.ambiguity_rate > 1.0)
      throw ConfigError("generate.ambiguity_rate", "must lie in [0, 1]");
  }
  return c;
}

std::string config_hash(const json& raw) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(raw.dump());
  return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Shared pipeline pieces

void require_path(const fs::path& p, const std::string& field) {
  if (p.empty()) throw ConfigError(field, "missing path");
  if (!fs::exists(p)) throw ConfigError(field, "no such file '" + p.string() + "'");
}

struct Inputs {
  Catalog catalog;
  std::unique_ptr<Environment> env;
  Benchmark benchmark;
};

Inputs load_inputs(const RunConfig& c) {
  require_path(c.catalog, "catalog");
  require_path(c.scenes, "scenes");
  require_path(c.tasks, "tasks");
  if (c.train_pairs) require_path(*c.train_pairs, "train_pairs");
  Inputs in;
  in.catalog = Catalog::load(c.catalog);
  in.env = std::make_unique<Environment>(in.catalog);
  in.benchmark = load_benchmark(c.scenes, c.tasks, in.catalog);
  return in;
}

std::vector<PoolEntry> prompt_pool(const RunConfig& c, const Inputs& in) {
  if (c.train_pairs) {
    std::vector<PoolEntry> pool;
    for (auto& p : load_training_pairs(*c.train_pairs, in.catalog))
      pool.push_back({std::move(p), "pairs"});
    return pool;
  }
  return in.benchmark.pool(c.prompt_split);
}

Planner make_planner(const RunConfig& c, const Inputs& in) {
  const auto pool = prompt_pool(c, in);
  const auto pairs = c.prompt_n == 0 ? std::vector<TrainingPair>{}
                                     : sample_prompt(pool, c.prompt_n, c.prompt_seed);
  auto model = make_model(c.model, pairs, in.catalog, in.env->affordances());
  return Planner(in.catalog, pairs, std::move(model), PlannerConfig{c.beam, c.criterion});
}

std::vector<const TaskSpec*> split_tasks(const Inputs& in, const std::string& name,
                                         std::optional<std::size_t> limit) {
  auto tasks = in.benchmark.split(name);
  if (limit && *limit < tasks.size()) tasks.resize(*limit);
  return tasks;
}

std::vector<EpisodeTask> episode_tasks(const Inputs& in, std::span<const TaskSpec* const> tasks) {
  std::vector<EpisodeTask> out;
  for (const auto* t : tasks) out.push_back({t, &in.benchmark.scene(t->scene_id)});
  return out;
}

class RunDir {
 public:
  RunDir(const RunConfig& c, std::string command) : config_(c), command_(std::move(command)) {
    fs::create_directories(c.output_dir);
  }
  void write(const std::string& name, const std::string& text) {
    write_file_atomic(config_.output_dir / name, text);
    files_.push_back(name);
  }
  /// For files written by other code.
  void record(const std::string& name) { files_.push_back(name); }
  void finish(json seeds) {
    json m;
    m["command"] = command_;
    m["config_hash"] = config_hash(config_.raw);
    m["config"] = config_.raw;
    m["seeds"] = std::move(seeds);
    m["files"] = files_;
    write_file_atomic(config_.output_dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  const RunConfig& config_;
  std::string command_;
  std::vector<std::string> files_;
};

json hypothesis_json(const Hypothesis& h, std::size_t rank) {
  json j;
  j["rank"] = rank;
  j["plan"] = h.text();
  j["forward"] = h.logp_forward;
  j["reverse"] = h.logp_reverse ? json(*h.logp_reverse) : json(nullptr);
  j["combined"] = h.combined ? json(*h.combined) : json(nullptr);
  return j;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const RunConfig& c, std::ostream& out) {
  require_path(c.catalog, "catalog");
  const auto catalog = Catalog::load(c.catalog);
  const Environment env(catalog);
  const auto bm = generate_benchmark(env, c.generate);
  RunDir dir(c, "generate-benchmark");
  save_benchmark(c.output_dir, bm);
  for (auto name : {"scenes.jsonl", "tasks.jsonl", "train_pairs.tsv"}) dir.record(name);
  std::size_t ambiguous = 0;
  for (const auto& t : bm.tasks()) ambiguous += t.ambiguous;
  dir.finish({{"generate", c.generate.seed}});
  out << "wrote " << bm.scenes().size() << " scenes and " << bm.tasks().size() << " tasks ("
      << ambiguous << " ambiguous) to " << c.output_dir.string() << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  const auto in = load_inputs(c);
  const auto planner = make_planner(c, in);
  const auto tasks = split_tasks(in, c.eval_split, c.eval_limit);
  const auto records = predict_records(planner, tasks, c.threads);
  std::string lines;
  for (const auto& r : records) {
    json j;
    j["task_id"] = r.task_id;
    j["instruction"] = r.instruction;
    j["gold"] = serialize(r.gold);
    j["hypotheses"] = json::array();
    for (std::size_t i = 0; i < r.predicted.size(); ++i)
      j["hypotheses"].push_back(hypothesis_json(r.predicted[i], i + 1));
    lines += j.dump() + "\n";
  }
  RunDir dir(c, "predict");
  dir.write("predictions.jsonl", lines);
  dir.finish({{"prompt", c.prompt_seed}});
  out << "predicted " << records.size() << " instructions; top-1 recall "
      << fmt(topk_recall(records, 1)) << ", top-" << c.k << " recall "
      << fmt(topk_recall(records, c.k)) << "\n";
  return kExitOk;
}

int cmd_feedback_train(const RunConfig& c, std::ostream& out) {
  const auto in = load_inputs(c);
  const auto planner = make_planner(c, in);
  const auto tasks = split_tasks(in, c.feedback_split, c.feedback_budget);
  const auto episodes = episode_tasks(in, tasks);
  const auto encoder = StateEncoder::identity(in.catalog.size());
  const ProposeFn propose = [&](std::string_view s) { return planner.propose(s); };
  const auto data = collect_feedback(episodes, propose, *in.env, encoder, {c.threads});
  if (data.empty())
    throw RankerError(RankerError::Kind::EmptyDataset,
                      "no feedback examples: none of the " + std::to_string(tasks.size()) +
                          " feedback instructions produced a successful plan; raise "
                          "feedback.budget or use a larger prompt (prompt.n)");
  const auto featurizer = make_featurizer(c.featurizer);
  const auto result = train(data, *featurizer,
                            RankerParams::zeros(encoder.dim(), featurizer->dim(), c.featurizer),
                            c.train);
  RunDir dir(c, "feedback-train");
  std::string fb;
  for (const auto& e : data) fb += feedback_to_json_line(e) + "\n";
  dir.write("feedback.jsonl", fb);
  result.params.save(c.output_dir / "params.txt");
  dir.record("params.txt");
  std::ostringstream log;
  log << "epoch\tloss\n";
  log << std::setprecision(17);
  for (std::size_t i = 0; i < result.epoch_loss.size(); ++i)
    log << i + 1 << '\t' << result.epoch_loss[i] << '\n';
  dir.write("train_log.tsv", log.str());
  dir.finish({{"prompt", c.prompt_seed}});
  out << "collected " << data.size() << " feedback examples from " << tasks.size()
      << " instructions; loss " << result.epoch_loss.front() << " -> "
      << result.epoch_loss.back() << "\n";
  return kExitOk;
}

json rates_json(const SuccessRates& r) {
  return {{"episodes", r.episodes},
          {"task_rate", r.task_rate},
          {"goal_condition_rate", r.goal_condition_rate}};
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const auto in = load_inputs(c);
  const auto planner = make_planner(c, in);
  const auto tasks = split_tasks(in, c.eval_split, c.eval_limit);
  const auto episodes = episode_tasks(in, tasks);
  const auto records = predict_records(planner, tasks, c.threads);

  const auto encoder = StateEncoder::identity(in.catalog.size());
  std::optional<RankerParams> trained;
  if (c.params) {
    require_path(*c.params, "eval.params");
    trained = RankerParams::load(*c.params);
  }
  const auto featurizer = make_featurizer(trained ? trained->featurizer : c.featurizer);
  if (trained && (trained->state_dim != encoder.dim() || trained->text_dim != featurizer->dim()))
    throw RankerError(RankerError::Kind::DimensionMismatch,
                      "params file does not match the state encoder or featurizer");
  const auto zero = RankerParams::zeros(encoder.dim(), featurizer->dim(), featurizer->spec());

  std::vector<PolicyRow> rows;
  const RolloutContext zero_ctx{*in.env, *featurizer, encoder, zero, c.i_thresh};
  rows.push_back(policy_row("predicted", records, episodes, zero_ctx, false, c.threads));
  if (trained) {
    const RolloutContext ctx{*in.env, *featurizer, encoder, *trained, c.i_thresh};
    rows.push_back(policy_row("reranked", records, episodes, ctx, false, c.threads));
  }
  rows.push_back(policy_row("oracle", records, episodes, zero_ctx, true, c.threads));

  const std::vector<RankCriterion> criteria{RankCriterion::forward(), RankCriterion::reverse(),
                                            c.criterion.kind == CriterionKind::WeightedMI
                                                ? c.criterion
                                                : RankCriterion::weighted_mi()};
  const auto table = compare_criteria(records, criteria);
  const auto objects = confusion(records, ConfusionSlot::Object, in.catalog);
  const auto actions = confusion(records, ConfusionSlot::Action, in.catalog);

  json report;
  report["tasks"] = records.size();
  std::size_t n_amb = 0;
  for (const auto* t : tasks) n_amb += t->ambiguous;
  report["ambiguous_tasks"] = n_amb;
  report["recall"] = {{"top1", topk_recall(records, 1)},
                      {"k", c.k},
                      {"topk", topk_recall(records, c.k)}};
  report["rows"] = json::array();
  std::ostringstream txt;
  txt << "row\ttask_rate\tgoal_condition_rate\tambiguous_task_rate\n";
  for (const auto& row : rows) {
    std::vector<Episode> amb;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i]->ambiguous) amb.push_back(row.episodes[i]);
    const auto amb_rates = summarize(amb);
    auto j = rates_json(row.rates);
    j["name"] = row.name;
    j["ambiguous"] = rates_json(amb_rates);
    report["rows"].push_back(j);
    txt << row.name << '\t' << fmt(row.rates.task_rate) << '\t'
        << fmt(row.rates.goal_condition_rate) << '\t' << fmt(amb_rates.task_rate) << '\n';
  }
  report["criteria"] = json::array();
  for (std::size_t i = 0; i < table.criteria.size(); ++i)
    report["criteria"].push_back({{"criterion", table.criteria[i]}, {"top1", table.top1[i]}});
  json mc = json::object();
  for (const auto& [gold, entries] : objects.most_confused()) {
    json row = json::array();
    for (const auto& e : entries) row.push_back({e.label, e.count});
    mc[gold] = row;
  }
  report["most_confused_objects"] = mc;
  txt << "\ntop-1 recall " << fmt(topk_recall(records, 1)) << ", top-" << c.k << " recall "
      << fmt(topk_recall(records, c.k)) << "\n\n"
      << table.to_tsv() << "\nmost confused objects\n"
      << objects.most_confused_text() << "\nmost confused actions\n"
      << actions.most_confused_text();

  RunDir dir(c, "eval");
  dir.write("report.json", report.dump(2) + "\n");
  dir.write("report.txt", txt.str());
  dir.write("criteria.tsv", table.to_tsv());
  dir.write("confusion_object.tsv", objects.to_tsv());
  dir.write("confusion_action.tsv", actions.to_tsv());
  dir.finish({{"prompt", c.prompt_seed}});
  out << txt.str().substr(0, txt.str().find("\n\n")) << "\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& c, std::ostream& out) {
  const auto in = load_inputs(c);
  const auto pool = prompt_pool(c, in);
  const auto tasks = split_tasks(in, c.eval_split, c.eval_limit);
  SweepConfig sc;
  sc.n_values = c.sweep_n;
  sc.seeds = c.sweep_seeds;
  sc.k = c.k;
  sc.model = c.model;
  sc.planner = PlannerConfig{c.beam, c.criterion};
  sc.threads = c.threads;
  const auto table = ablation_sweep(pool, tasks, *in.env, sc);
  RunDir dir(c, "sweep");
  dir.write("sweep.tsv", table.to_tsv());
  dir.finish({{"sweep", c.sweep_seeds}});
  out << table.to_tsv();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot subgoal planning: prediction, feedback training and evaluation"};
  app.require_subcommand(1);

  struct Common {
    std::string config, out, catalog, criterion, params;
    std::optional<double> lambda;
    std::optional<std::uint64_t> prompt_seed, seed;
    std::optional<std::size_t> threads, budget, limit;
  } o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "JSON run configuration");
    sub->add_option("-o,--out", o.out, "run directory (overrides output_dir)");
    sub->add_option("--catalog", o.catalog, "catalog file (overrides catalog)");
    sub->add_option("--threads", o.threads, "worker threads, 0 = all cores");
  };
  auto* gen = app.add_subcommand("generate-benchmark", "write a seeded scene/task benchmark");
  add_common(gen);
  gen->add_option("--seed", o.seed, "generator seed");
  auto add_model = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--criterion", o.criterion, "forward, reverse or wmi");
    sub->add_option("--lambda", o.lambda, "weighted-MI lambda in [0, 1]");
    sub->add_option("--prompt-seed", o.prompt_seed, "seed for prompt sampling");
    sub->add_option("--limit", o.limit, "evaluate only the first N tasks of the split");
  };
  auto* predict = app.add_subcommand("predict", "decode and rank plans for the eval split");
  add_model(predict);
  auto* fbt = app.add_subcommand("feedback-train", "collect execution feedback and train the ranker");
  add_model(fbt);
  fbt->add_option("--budget", o.budget, "number of feedback instructions");
  auto* ev = app.add_subcommand("eval", "success rates, recall, criteria and confusion report");
  add_model(ev);
  ev->add_option("--params", o.params, "trained ranker parameters");
  auto* sweep = app.add_subcommand("sweep", "prompt-size ablation over seeds");
  add_model(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  RunConfig config;
  try {
    json raw = json::object();
    fs::path base = fs::current_path();
    if (!o.config.empty()) {
      if (!fs::exists(o.config)) throw ConfigError("config", "no such file '" + o.config + "'");
      try {
        raw = json::parse(read_file(o.config));
      } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
      }
      base = fs::absolute(o.config).parent_path();
    }
    if (!raw.is_object()) throw ConfigError("config", "expected a JSON object");
    // Command-line overrides land in the raw config so the hash covers them.
    auto abs = [&](const std::string& p) { return fs::absolute(p).string(); };
    if (!o.out.empty()) raw["output_dir"] = abs(o.out);
    if (!o.catalog.empty()) raw["catalog"] = abs(o.catalog);
    if (o.threads) raw["threads"] = *o.threads;
    if (o.seed) raw["generate"]["seed"] = *o.seed;
    if (!o.criterion.empty()) raw["criterion"]["kind"] = o.criterion;
    if (o.lambda) raw["criterion"]["lambda"] = *o.lambda;
    if (o.prompt_seed) raw["prompt"]["seed"] = *o.prompt_seed;
    if (o.budget) raw["feedback"]["budget"] = *o.budget;
    if (o.limit) raw["eval"]["limit"] = *o.limit;
    if (!o.params.empty()) raw["eval"]["params"] = abs(o.params);
    config = parse_run_config(raw, base);

    if (command == "generate-benchmark") return cmd_generate(config, out);
    if (command == "predict") return cmd_predict(config, out);
    if (command == "feedback-train") return cmd_feedback_train(config, out);
    if (command == "eval") return cmd_eval(config, out);
    return cmd_sweep(config, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ModelError& e) {
    if (e.kind() == ModelError::Kind::InvalidConfig || e.kind() == ModelError::Kind::InvalidOrder) {
      err << "config error: model: " << e.what() << "\n";
      return kExitConfig;
    }
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const RankerError& e) {
    static constexpr const char* kNames[] = {"DimensionMismatch", "EmptyDataset", "InvalidParams"};
    err << "error (" << kNames[static_cast<int>(e.kind())] << "): " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace subplan
