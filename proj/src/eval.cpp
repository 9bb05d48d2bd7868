#include "subplan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "subplan/parallel.hpp"

namespace subplan {

namespace {

std::string fixed(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::string slot_label(const Subgoal& g, ConfusionSlot slot) {
  return slot == ConfusionSlot::Object ? g.object.id : std::string(action_name(g.action));
}

}  // namespace

std::vector<EvalRecord> predict_records(const Planner& planner,
                                        std::span<const TaskSpec* const> tasks,
                                        std::size_t threads) {
  for (const auto* t : tasks)
    if (!t->oracle_plan)
      throw std::invalid_argument("task '" + t->id + "' has no oracle plan to evaluate against");
  std::vector<EvalRecord> out(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    const auto& t = *tasks[i];
    out[i] = EvalRecord{t.id, t.instruction, *t.oracle_plan, planner.propose(t.instruction), {}};
  });
  return out;
}

double topk_recall(std::span<const EvalRecord> records, std::size_t k) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : records) {
    const auto n = std::min(k, r.predicted.size());
    for (std::size_t i = 0; i < n; ++i)
      if (r.predicted[i].plan == r.gold) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::string CriteriaTable::to_tsv() const {
  std::ostringstream os;
  os << "criterion\ttop1_recall\trecords\n";
  for (std::size_t i = 0; i < criteria.size(); ++i)
    os << criteria[i] << '\t' << fixed(top1[i]) << '\t' << records << '\n';
  return os.str();
}

CriteriaTable compare_criteria(std::span<const EvalRecord> records,
                               std::span<const RankCriterion> criteria) {
  CriteriaTable table;
  table.records = records.size();
  for (const auto& c : criteria) {
    std::size_t hits = 0;
    for (const auto& r : records) {
      if (r.predicted.empty()) continue;
      if (rank(r.predicted, c).front().plan == r.gold) ++hits;
    }
    table.criteria.push_back(c.name());
    table.top1.push_back(records.empty() ? 0.0
                                         : static_cast<double>(hits) /
                                               static_cast<double>(records.size()));
  }
  return table;
}

std::size_t ConfusionMatrix::index(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw std::out_of_range("unknown confusion label '" + std::string(label) + "'");
}

std::size_t ConfusionMatrix::at(std::string_view gold, std::string_view predicted) const {
  return counts[index(gold)][index(predicted)];
}

std::size_t ConfusionMatrix::row_sum(std::string_view gold) const {
  const auto& row = counts[index(gold)];
  std::size_t s = 0;
  for (auto c : row) s += c;
  return s;
}

std::string ConfusionMatrix::to_tsv() const {
  std::ostringstream os;
  os << "gold\\predicted";
  for (const auto& l : labels) os << '\t' << l;
  os << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << labels[i];
    for (auto c : counts[i]) os << '\t' << c;
    os << '\n';
  }
  return os.str();
}

std::vector<std::pair<std::string, std::vector<ConfusionEntry>>> ConfusionMatrix::most_confused()
    const {
  std::vector<std::pair<std::string, std::vector<ConfusionEntry>>> out;
  std::vector<std::size_t> errors;
  for (std::size_t g = 0; g < labels.size(); ++g) {
    std::vector<ConfusionEntry> row;
    std::size_t total = 0;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (p == g || counts[g][p] == 0) continue;
      row.push_back({labels[p], counts[g][p]});
      total += counts[g][p];
    }
    if (row.empty()) continue;
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a.count != b.count ? a.count > b.count : a.label < b.label;
    });
    out.emplace_back(labels[g], std::move(row));
    errors.push_back(total);
  }
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
  std::vector<std::pair<std::string, std::vector<ConfusionEntry>>> sorted;
  for (auto i : order) sorted.push_back(std::move(out[i]));
  return sorted;
}

std::string ConfusionMatrix::most_confused_text() const {
  std::ostringstream os;
  for (const auto& [gold, row] : most_confused()) {
    os << gold << ':';
    for (const auto& e : row) os << ' ' << e.label << " (" << e.count << ')';
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix confusion(std::span<const EvalRecord> records, ConfusionSlot slot,
                          const Catalog& catalog) {
  ConfusionMatrix m;
  if (slot == ConfusionSlot::Object) {
    for (const auto& o : catalog.objects()) m.labels.push_back(o.id);
  } else {
    for (auto a : kAllActions) m.labels.emplace_back(action_name(a));
  }
  m.labels.emplace_back(kNullLabel);
  const auto n = m.labels.size();
  m.counts.assign(n, std::vector<std::size_t>(n, 0));
  std::map<std::string, std::size_t, std::less<>> idx;
  for (std::size_t i = 0; i < n; ++i) idx[m.labels[i]] = i;
  const auto null = n - 1;

  for (const auto& r : records) {
    static const SubgoalSequence empty{{}, false};
    const auto& pred = r.predicted.empty() ? empty : r.predicted.front().plan;
    const auto len = std::max(r.gold.size(), pred.size());
    for (std::size_t i = 0; i < len; ++i) {
      const auto g = i < r.gold.size() ? idx.at(slot_label(r.gold.steps[i], slot)) : null;
      const auto p = i < pred.size() ? idx.at(slot_label(pred.steps[i], slot)) : null;
      ++m.counts[g][p];
    }
  }
  return m;
}

PolicyRow policy_row(std::string name, std::span<const EvalRecord> records,
                     std::span<const EpisodeTask> tasks, const RolloutContext& ctx, bool oracle,
                     std::size_t threads) {
  if (records.size() != tasks.size())
    throw std::invalid_argument("policy_row: " + std::to_string(records.size()) +
                                " records for " + std::to_string(tasks.size()) + " tasks");
  PolicyRow row;
  row.name = std::move(name);
  row.episodes.resize(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    std::vector<SubgoalSequence> cands;
    if (oracle) {
      cands.push_back(records[i].gold);
    } else {
      for (const auto& h : records[i].predicted) cands.push_back(h.plan);
    }
    row.episodes[i] =
        rollout(cands, records[i].instruction, *tasks[i].scene, *tasks[i].task, ctx);
  });
  row.rates = summarize(row.episodes);
  return row;
}

std::pair<double, double> mean_stddev(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (auto v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (auto v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

std::string SweepTable::to_tsv() const {
  std::ostringstream os;
  os << "n\truns\ttop1_mean\ttop1_stddev\ttop" << k << "_mean\ttop" << k << "_stddev\tstatus\n";
  for (const auto& r : rows)
    os << r.n << '\t' << r.runs << '\t' << fixed(r.top1_mean) << '\t' << fixed(r.top1_stddev)
       << '\t' << fixed(r.topk_mean) << '\t' << fixed(r.topk_stddev) << '\t' << r.status << '\n';
  return os.str();
}

SweepTable ablation_sweep(std::span<const PoolEntry> pool,
                          std::span<const TaskSpec* const> eval_tasks, const Environment& env,
                          const SweepConfig& config) {
  if (config.seeds.empty()) throw std::invalid_argument("ablation_sweep needs at least one seed");
  SweepTable table;
  table.k = config.k;
  for (auto n : config.n_values) {
    // Fail before any decoding when the pool is too small.
    if (n > pool.size()) sample_prompt(pool, n, config.seeds.front());
    std::vector<double> top1, topk;
    std::size_t overflow = 0;
    for (auto seed : config.seeds) {
      const auto pairs = n == 0 ? std::vector<TrainingPair>{} : sample_prompt(pool, n, seed);
      const auto model = make_model(config.model, pairs, env.catalog(), env.affordances());
      const Planner planner(env.catalog(), pairs, model, config.planner);
      try {
        const auto records = predict_records(planner, eval_tasks, config.threads);
        top1.push_back(topk_recall(records, 1));
        topk.push_back(topk_recall(records, config.k));
      } catch (const DecodeError& e) {
        if (e.kind() != DecodeError::Kind::ContextOverflow) throw;
        ++overflow;
      }
    }
    SweepRow row;
    row.n = n;
    row.runs = top1.size();
    std::tie(row.top1_mean, row.top1_stddev) = mean_stddev(top1);
    std::tie(row.topk_mean, row.topk_stddev) = mean_stddev(topk);
    if (overflow == config.seeds.size()) {
      row.status = "context-overflow";
    } else if (overflow > 0) {
      row.status = "partial-overflow";
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace subplan
