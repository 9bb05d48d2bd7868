#pragma once

// Environment-feedback ranking model f(g, tau, s; theta) = theta . [state ; text].

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subplan/env.hpp"
#include "subplan/planner.hpp"

namespace subplan {

/// Joint encoding of an instruction and a serialized plan.
class TextFeaturizer {
 public:
  virtual ~TextFeaturizer() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> encode(std::string_view instruction,
                                     std::string_view serialized_plan) const = 0;
  /// Round-trips through make_featurizer().
  virtual std::string spec() const = 0;
};

/// Signed feature hashing (FNV-1a) over the word tokens of
/// "instruction [SEP] plan": unigrams, bigrams and, when `cross` is set,
/// every (instruction word, plan word) pair.
class HashedNgramFeaturizer final : public TextFeaturizer {
 public:
  explicit HashedNgramFeaturizer(std::size_t dim = 4096, bool cross = true);

  std::size_t dim() const override { return dim_; }
  std::vector<double> encode(std::string_view instruction,
                             std::string_view serialized_plan) const override;
  std::string spec() const override;

 private:
  void add(std::vector<double>& v, std::string_view feature) const;

  std::size_t dim_;
  bool cross_;
  WordTokenizer tokenizer_;
};

/// Accepts "hashed:<dim>" and "hashed:<dim>:cross".
std::unique_ptr<TextFeaturizer> make_featurizer(std::string_view spec);

class RankerError : public std::runtime_error {
 public:
  enum class Kind { DimensionMismatch, EmptyDataset, InvalidParams };
  RankerError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct RankerParams {
  std::size_t state_dim = 0;
  std::size_t text_dim = 0;
  std::string featurizer = "hashed:4096:cross";
  std::vector<double> theta;  // state coordinates first

  static RankerParams zeros(std::size_t state_dim, std::size_t text_dim, std::string featurizer);
  void save(const std::filesystem::path& path) const;
  static RankerParams load(const std::filesystem::path& path);
};

/// theta . concat(state, text).
double f_score(std::span<const double> state_features, std::span<const double> text_features,
               const RankerParams& params);

/// Pooled per-category counts passed through the projection.
struct StateEncoder {
  std::size_t catalog_size = 0;
  StateProjection projection;

  static StateEncoder identity(std::size_t catalog_size);
  std::size_t dim() const { return projection.out_dim; }
  std::vector<double> encode(const AgentState& s) const {
    return state_features(s, catalog_size, projection);
  }
};

struct Candidate {
  SubgoalSequence plan;
  double logp_forward = 0.0;
  double logp_reverse = 0.0;
  double combined = 0.0;
};

std::vector<Candidate> to_candidates(std::span<const Hypothesis> ranked);

/// One (g, tau, s) record: the successful plan, the instruction, one
/// visited state of the successful episode and the decoded candidate set.
struct FeedbackExample {
  std::string task_id;
  std::string instruction;
  std::vector<Candidate> candidates;
  std::size_t success_index = 0;  // position of the successful plan in candidates
  std::size_t state_step = 0;     // 0 = initial state
  std::vector<double> state;      // encoded state features

  const SubgoalSequence& plan() const { return candidates.at(success_index).plan; }
};

struct EpisodeTask {
  const TaskSpec* task = nullptr;
  const Scene* scene = nullptr;
};

struct CollectConfig {
  std::size_t threads = 0;  // 0 picks the hardware concurrency
};

/// Feedback collection: executes candidates in rank order. `propose` returns WeightedMI-ranked
/// candidates for an instruction.
using ProposeFn = std::function<std::vector<Hypothesis>(std::string_view)>;
std::vector<FeedbackExample> collect_feedback(std::span<const EpisodeTask> tasks,
                                              const ProposeFn& propose, const Environment& env,
                                              const StateEncoder& encoder,
                                              const CollectConfig& config = {});

std::string feedback_to_json_line(const FeedbackExample& e);
FeedbackExample feedback_from_json_line(std::string_view line, const Catalog& catalog);

struct TrainConfig {
  std::size_t epochs = 100;
  double step_size = 1.0;
  /// Step on the mean gradient over the dataset rather than the sum.
  bool mean_gradient = true;
};

struct TrainResult {
  RankerParams params;
  std::vector<double> epoch_loss;  // summed loss before each update
};

/// Dataset features: per example, the state vector and one text vector per
/// candidate.
struct EncodedExample {
  std::vector<double> state;
  std::shared_ptr<const std::vector<std::vector<double>>> texts;  // shared per instruction
  std::size_t positive = 0;
};

std::vector<EncodedExample> encode_dataset(std::span<const FeedbackExample> data,
                                           const TextFeaturizer& featurizer);

/// Summed softmax cross-entropy of the positives and its gradient.
double ranking_loss(std::span<const EncodedExample> data, const RankerParams& params,
                    std::vector<double>* gradient = nullptr);

/// Plain gradient descent from `init`. Throws EmptyDataset on no data.
TrainResult train(std::span<const FeedbackExample> data, const TextFeaturizer& featurizer,
                  const RankerParams& init, const TrainConfig& config = {});

enum class StopReason { StopMarker, NoCandidates, StepLimit };
std::string_view stop_reason_name(StopReason r);

struct EpisodeStep {
  Subgoal subgoal;
  std::size_t plan_index = 0;  // candidate index of the plan that proposed it
  bool success = false;
  ExecReason reason = ExecReason::Ok;
  std::size_t remaining = 0;   // |G| after the step
};

struct Episode {
  std::vector<EpisodeStep> steps;
  std::optional<std::size_t> final_plan;  // candidate index
  AgentState final_state;
  StopReason stop = StopReason::NoCandidates;
  int reward = 0;
  double goal_fraction = 0.0;
};

struct RolloutContext {
  const Environment& env;
  const TextFeaturizer& featurizer;
  const StateEncoder& encoder;
  const RankerParams& params;
  std::size_t i_thresh = 10;
};

/// State-aware pruning rollout over a fixed candidate list (in WeightedMI order). Every
/// execution attempt counts toward i_thresh; a failed attempt removes the
/// proposing plan from G and leaves the state unchanged.
Episode rollout(std::span<const SubgoalSequence> candidates, std::string_view instruction,
                const Scene& scene, const TaskSpec& task, const RolloutContext& ctx);

struct SuccessRates {
  std::size_t episodes = 0;
  double task_rate = 0.0;
  double goal_condition_rate = 0.0;
  /// Printable rates, or "no episodes" for an empty run.
  std::string to_string() const;
};

SuccessRates summarize(std::span<const Episode> episodes);

struct PolicyRun {
  std::vector<Episode> episodes;
  std::vector<std::vector<SubgoalSequence>> candidates;  // per task, as rolled out
  SuccessRates rates;
};

/// Rolls out every task on the candidates from `propose`; an empty
/// `propose` substitutes each task's oracle plan as the only candidate.
PolicyRun policy_success_rate(std::span<const EpisodeTask> tasks, const ProposeFn& propose,
                              const RolloutContext& ctx, std::size_t threads = 0);

}  // namespace subplan
