#include "subplan/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>

namespace subplan {

NGramModel NGramModel::fit(std::span<const std::string> corpus, NGramConfig config,
                           std::span<const std::string> extra_vocabulary,
                           std::shared_ptr<const Tokenizer> tokenizer,
                           const RetrievalSpec& retrieval) {
  using Kind = ModelError::Kind;
  if (config.order < 1)
    throw ModelError(Kind::InvalidOrder, "n-gram order must be >= 1, got " +
                                             std::to_string(config.order));
  if (corpus.empty()) throw ModelError(Kind::EmptyCorpus, "n-gram corpus is empty");
  if (config.weights.empty()) {
    for (int k = 0; k < config.order; ++k) config.weights.push_back(std::ldexp(1.0, k));
  }
  if (config.weights.size() != static_cast<std::size_t>(config.order))
    throw ModelError(Kind::InvalidConfig, "expected one interpolation weight per order");
  for (double w : config.weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ModelError(Kind::InvalidConfig, "interpolation weights must be finite and >= 0");
  const double wsum = std::accumulate(config.weights.begin(), config.weights.end(), 0.0);
  if (!(wsum > 0.0)) throw ModelError(Kind::InvalidConfig, "interpolation weights sum to zero");
  for (double& w : config.weights) w /= wsum;
  if (!(config.unigram_add > 0.0))
    throw ModelError(Kind::InvalidConfig, "unigram_add must be positive");
  if (!(config.cache_boost >= 0.0) || !std::isfinite(config.cache_boost))
    throw ModelError(Kind::InvalidConfig, "cache_boost must be finite and >= 0");
  if (!(config.retrieval_weight >= 0.0) || !(config.retrieval_weight <= 1.0))
    throw ModelError(Kind::InvalidConfig, "retrieval_weight must lie in [0, 1]");
  if (!(config.retrieval_sharpness >= 0.0) || !std::isfinite(config.retrieval_sharpness))
    throw ModelError(Kind::InvalidConfig, "retrieval_sharpness must be finite and >= 0");
  if (config.retrieval_order < 1)
    throw ModelError(Kind::InvalidOrder, "retrieval_order must be >= 1");

  NGramModel m;
  m.config_ = std::move(config);
  m.tokenizer_ = tokenizer ? std::move(tokenizer) : std::make_shared<WordTokenizer>();

  std::vector<Tokens> sentences;
  sentences.reserve(corpus.size());
  std::set<std::string> vocab{kUnknown};
  for (const auto& text : corpus) {
    sentences.push_back(m.tokenizer_->encode(text));
    vocab.insert(sentences.back().begin(), sentences.back().end());
  }
  if (!retrieval.examples.empty()) {
    vocab.insert("=");
    vocab.insert(m.config_.retrieval_separator);
  }
  for (const auto& e : retrieval.examples) {
    for (const auto& t : m.tokenizer_->encode(e.source)) vocab.insert(t);
    for (const auto& t : m.tokenizer_->encode(e.target)) vocab.insert(t);
  }
  vocab.insert(extra_vocabulary.begin(), extra_vocabulary.end());
  m.vocab_.assign(vocab.begin(), vocab.end());
  for (TokenId i = 0; i < m.vocab_.size(); ++i) m.ids_.emplace(m.vocab_[i], i);
  m.unk_ = m.ids_.at(kUnknown);

  const auto order = static_cast<std::size_t>(m.config_.order);
  m.unigram_.assign(m.vocab_.size(), 0);
  m.levels_.resize(order);
  for (const auto& sent : sentences) {
    std::vector<TokenId> ids;
    ids.reserve(sent.size());
    for (const auto& t : sent) ids.push_back(m.ids_.at(t));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ++m.unigram_[ids[i]];
      ++m.unigram_total_;
      for (std::size_t h = 1; h < order && h <= i; ++h) {
        auto key = history_key(std::span(ids).subspan(i - h, h));
        auto& hc = m.levels_[h][key];
        ++hc.total;
        ++hc.next[ids[i]];
      }
    }
  }
  if (!retrieval.examples.empty()) m.fit_retrieval(retrieval);
  return m;
}

struct NGramModel::AdaptedCache {
  std::mutex mutex;
  std::map<std::pair<int, std::vector<TokenId>>, std::shared_ptr<const Adapted>> entries;
};

void NGramModel::fit_retrieval(const RetrievalSpec& spec) {
  const auto& examples = spec.examples;
  const TokenId eq = id_of("=");
  const TokenId sep = id_of(config_.retrieval_separator);
  std::vector<std::map<TokenId, double>> tf(examples.size());
  std::map<TokenId, double> df;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (const auto& t : tokenizer_->encode(examples[i].source)) tf[i][id_of(t)] += 1.0;
    for (const auto& [w, c] : tf[i]) df[w] += 1.0;
  }
  const double n = static_cast<double>(examples.size());
  for (const auto& [w, d] : df) idf_[w] = std::log((n + 1.0) / (d + 1.0)) + 1.0;

  substitutable_.assign(vocab_.size(), false);
  for (const auto& t : spec.substitutable)
    if (auto it = ids_.find(t); it != ids_.end()) substitutable_[it->second] = true;

  for (std::size_t i = 0; i < examples.size(); ++i) {
    Example ex;
    ex.group = examples[i].group;
    for (const auto& t : tokenizer_->encode(examples[i].source)) ex.source.push_back(id_of(t));
    double norm = 0.0;
    for (const auto& [w, c] : tf[i]) {
      const double v = c * idf_.at(w);
      ex.source_vec[w] = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& [w, v] : ex.source_vec) v /= norm;
    ex.target.push_back(eq);
    for (const auto& t : tokenizer_->encode(examples[i].target)) ex.target.push_back(id_of(t));
    ex.target.push_back(sep);
    examples_.push_back(std::move(ex));
  }
  adapted_cache_ = std::make_shared<AdaptedCache>();
}

std::vector<NGramModel::TokenId> NGramModel::rewrite(const Example& ex,
                                                     std::span<const TokenId> query) const {
  const auto& a = ex.source;
  const auto n = a.size(), m = query.size();
  // Longest common subsequence table, suffix form.
  std::vector<std::vector<std::uint16_t>> lcs(n + 1, std::vector<std::uint16_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = a[i] == query[j] ? lcs[i + 1][j + 1] + 1
                                   : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  // Walk the alignment and collect differing blocks.
  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> rules;
  std::vector<TokenId> from, to;
  auto flush = [&] {
    const auto ok = [&](const std::vector<TokenId>& v) {
      return !v.empty() && std::all_of(v.begin(), v.end(),
                                       [&](TokenId t) { return substitutable_[t]; });
    };
    if (ok(from) && ok(to) && from != to) rules.emplace_back(from, to);
    from.clear();
    to.clear();
  };
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && a[i] == query[j]) {
      flush();
      ++i;
      ++j;
    } else if (j == m || (i < n && lcs[i + 1][j] >= lcs[i][j + 1])) {
      from.push_back(a[i++]);
    } else {
      to.push_back(query[j++]);
    }
  }
  flush();
  if (rules.empty()) return ex.target;
  std::sort(rules.begin(), rules.end(),
            [](const auto& x, const auto& y) { return x.first.size() > y.first.size(); });

  std::vector<TokenId> out;
  const auto& t = ex.target;
  for (std::size_t k = 0; k < t.size();) {
    bool replaced = false;
    for (const auto& [f, r] : rules) {
      if (k + f.size() > t.size() || !std::equal(f.begin(), f.end(), t.begin() + k)) continue;
      out.insert(out.end(), r.begin(), r.end());
      k += f.size();
      replaced = true;
      break;
    }
    if (!replaced) out.push_back(t[k++]);
  }
  return out;
}

std::shared_ptr<const NGramModel::Adapted> NGramModel::adapt(std::span<const TokenId> query,
                                                             std::optional<int> group) const {
  std::pair<int, std::vector<TokenId>> key{group.value_or(-1), {query.begin(), query.end()}};
  {
    std::lock_guard lock(adapted_cache_->mutex);
    if (auto it = adapted_cache_->entries.find(key); it != adapted_cache_->entries.end())
      return it->second;
  }
  std::unordered_map<TokenId, double> qv;
  for (auto w : query)
    if (auto it = idf_.find(w); it != idf_.end()) qv[w] += it->second;
  double qn = 0.0;
  for (const auto& [w, v] : qv) qn += v * v;
  qn = std::sqrt(qn);

  auto out = std::make_shared<Adapted>();
  for (const auto& ex : examples_) {
    if (group && ex.group != *group) continue;
    double cos = 0.0;
    if (qn > 0.0)
      for (const auto& [w, v] : qv)
        if (auto it = ex.source_vec.find(w); it != ex.source_vec.end()) cos += v / qn * it->second;
    out->weights.push_back(std::exp(config_.retrieval_sharpness * (cos - 1.0)));
    out->targets.push_back(rewrite(ex, query));
  }
  std::lock_guard lock(adapted_cache_->mutex);
  if (adapted_cache_->entries.size() > 4096) adapted_cache_->entries.clear();
  adapted_cache_->entries.emplace(std::move(key), out);
  return out;
}

void NGramModel::prepare_retrieval(std::span<const std::string> context, Prepared& p) const {
  std::size_t last_eq = context.size();
  for (std::size_t i = context.size(); i > 0; --i)
    if (context[i - 1] == "=") {
      last_eq = i - 1;
      break;
    }
  if (last_eq == context.size()) return;
  std::size_t prev_eq = context.size();
  for (std::size_t i = last_eq; i > 0; --i)
    if (context[i - 1] == "=") {
      prev_eq = i - 1;
      break;
    }

  // Locate the query source: after the previous example's target and its
  // separator, or the whole prefix for a one-example prompt.
  std::size_t src_begin = 0;
  std::optional<int> group;
  if (prev_eq != context.size()) {
    const auto seg = context.subspan(prev_eq + 1, last_eq - prev_eq - 1);
    std::size_t best = 0;
    for (const auto& ex : examples_) {
      const auto len = ex.target.size() - 1;  // without the leading "="
      if (len > seg.size() || len <= best) continue;
      bool match = true;
      for (std::size_t j = 0; j < len && match; ++j) match = id_of(seg[j]) == ex.target[j + 1];
      if (!match) continue;
      best = len;
      group = ex.group;
    }
    if (!group) return;
    src_begin = prev_eq + 1 + best;
  }
  std::vector<TokenId> query;
  for (std::size_t i = src_begin; i < last_eq; ++i) query.push_back(id_of(context[i]));
  const auto adapted = adapt(query, group);

  std::vector<TokenId> hist{id_of("=")};
  for (std::size_t i = last_eq + 1; i < context.size(); ++i) hist.push_back(id_of(context[i]));
  const auto order = static_cast<std::size_t>(config_.retrieval_order);
  const auto max_h = std::min(order - 1, hist.size());
  std::vector<std::unordered_map<TokenId, double>> acc(max_h + 1);
  std::vector<double> total(max_h + 1, 0.0);
  for (std::size_t e = 0; e < adapted->targets.size(); ++e) {
    const auto& seq = adapted->targets[e];
    const double w = adapted->weights[e];
    for (std::size_t j = 1; j < seq.size(); ++j) {
      // Length of the common suffix of hist and seq[0, j), capped at max_h.
      std::size_t len = 0;
      while (len < max_h && len < j && seq[j - 1 - len] == hist[hist.size() - 1 - len]) ++len;
      for (std::size_t h = 0; h <= len; ++h) {
        acc[h][seq[j]] += w;
        total[h] += w;
      }
    }
  }
  double active = 0.0;
  for (std::size_t h = 0; h <= max_h; ++h) {
    if (!(total[h] > 0.0)) continue;
    const double a = std::ldexp(1.0, static_cast<int>(h));  // higher orders dominate
    for (const auto& [w, v] : acc[h]) p.retrieval[w] += a * v / total[h];
    active += a;
  }
  if (!(active > 0.0)) return;
  for (auto& [w, v] : p.retrieval) v /= active;
  p.retrieval_active = true;
}

std::string NGramModel::history_key(std::span<const TokenId> ids) {
  std::string key(ids.size() * sizeof(TokenId), '\0');
  std::copy_n(reinterpret_cast<const char*>(ids.data()), key.size(), key.data());
  return key;
}

NGramModel::TokenId NGramModel::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk_ : it->second;
}

NGramModel::Prepared NGramModel::prepare(std::span<const std::string> context) const {
  Prepared p;
  const auto order = static_cast<std::size_t>(config_.order);
  p.levels.assign(order, nullptr);
  p.active_weight = config_.weights[0];

  const std::size_t need = std::min(order - 1, context.size());
  std::vector<TokenId> tail;
  tail.reserve(need);
  for (std::size_t i = context.size() - need; i < context.size(); ++i)
    tail.push_back(id_of(context[i]));
  for (std::size_t h = 1; h < order && h <= tail.size(); ++h) {
    auto key = history_key(std::span(tail).subspan(tail.size() - h, h));
    auto it = levels_[h].find(key);
    if (it == levels_[h].end()) continue;
    p.levels[h] = &it->second;
    p.active_weight += config_.weights[h];
  }

  if (config_.retrieval_weight > 0.0 && !examples_.empty()) prepare_retrieval(context, p);

  if (config_.cache_boost > 0.0 && config_.cache_window > 0) {
    std::size_t end = context.size();
    if (!config_.cache_until.empty()) {
      for (std::size_t i = context.size(); i > 0; --i) {
        if (context[i - 1] == config_.cache_until) {
          end = i - 1;
          break;
        }
      }
    }
    std::size_t begin = end - std::min(config_.cache_window, end);
    const auto& stop = config_.cache_boundary;
    if (!stop.empty()) {
      for (std::size_t e = end; e >= stop.size() && e > begin; --e) {
        if (std::equal(stop.begin(), stop.end(), context.begin() + (e - stop.size()))) {
          begin = e;
          break;
        }
      }
    }
    for (std::size_t i = begin; i < end; ++i) p.boost[id_of(context[i])] += config_.cache_boost;
    double z = 1.0;
    for (const auto& [w, b] : p.boost) z += b * mixture(p, w);
    p.normalizer = z;
  }
  return p;
}

double NGramModel::mixture(const Prepared& p, TokenId w) const {
  const double uni = (static_cast<double>(unigram_[w]) + config_.unigram_add) /
                     (static_cast<double>(unigram_total_) +
                      config_.unigram_add * static_cast<double>(vocab_.size()));
  double mix;
  if (p.active_weight > 0.0) {
    mix = config_.weights[0] * uni;
    for (std::size_t h = 1; h < p.levels.size(); ++h) {
      const auto* hc = p.levels[h];
      if (!hc) continue;
      auto it = hc->next.find(w);
      if (it == hc->next.end()) continue;
      mix += config_.weights[h] * static_cast<double>(it->second) / static_cast<double>(hc->total);
    }
    mix /= p.active_weight;
  } else {
    mix = uni;
  }
  if (p.retrieval_active) {
    auto it = p.retrieval.find(w);
    const double r = it == p.retrieval.end() ? 0.0 : it->second;
    mix = (1.0 - config_.retrieval_weight) * mix + config_.retrieval_weight * r;
  }
  return mix;
}

double NGramModel::prob(const Prepared& p, TokenId w) const {
  const double mix = mixture(p, w);
  if (p.boost.empty()) return mix;
  auto it = p.boost.find(w);
  const double b = it == p.boost.end() ? 0.0 : it->second;
  return mix * (1.0 + b) / p.normalizer;
}

LogProbs NGramModel::next_logprobs(std::span<const std::string> context) const {
  const auto p = prepare(context);
  LogProbs out;
  out.reserve(vocab_.size());
  for (TokenId w = 0; w < vocab_.size(); ++w) out.emplace(vocab_[w], std::log(prob(p, w)));
  return out;
}

double NGramModel::logprob(std::span<const std::string> context, std::string_view token) const {
  return std::log(prob(prepare(context), id_of(token)));
}

NGramModel fit_prompt_model(std::span<const TrainingPair> pairs, const Catalog& catalog,
                            const NGramConfig& config,
                            std::span<const std::string> background) {
  std::vector<std::string> corpus(background.begin(), background.end());
  corpus.reserve(corpus.size() + pairs.size() * 2);
  for (const auto& p : pairs) {
    const auto plan = serialize(p.plan);
    corpus.push_back(p.instruction + std::string(kPromptEquals) + plan);
    corpus.push_back(plan + std::string(kPromptEquals) + p.instruction);
  }
  WordTokenizer tok;
  std::set<std::string> extra{",", ".", "="};
  for (ActionType a : kAllActions)
    for (const auto& t : tok.encode(action_phrase(a))) extra.insert(t);
  for (const auto& o : catalog.objects())
    for (const auto& t : tok.encode(o.display)) extra.insert(t);
  // A zero-shot prompt still needs a corpus; the vocabulary alone carries it.
  if (corpus.empty()) corpus.emplace_back();
  std::vector<std::string> extra_vec(extra.begin(), extra.end());
  RetrievalSpec retrieval;
  for (const auto& p : pairs) {
    const auto plan = serialize(p.plan);
    retrieval.examples.push_back({p.instruction, plan, 0});
    retrieval.examples.push_back({plan, p.instruction, 1});
  }
  std::set<std::string> objects;
  for (const auto& o : catalog.objects())
    for (const auto& t : tok.encode(o.display)) objects.insert(t);
  retrieval.substitutable.assign(objects.begin(), objects.end());
  return NGramModel::fit(corpus, config, extra_vec, nullptr, retrieval);
}

}  // namespace subplan
