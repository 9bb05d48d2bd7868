#pragma once

// Deterministic household simulator.
//
// A scene is a grid of object instances with state flags and a containment
// forest. Subgoals are executed at the outcome level: each action checks its
// affordance preconditions and either applies its effect or leaves the state
// untouched and reports why.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "subplan/grammar.hpp"

namespace subplan {

enum class RoomKind { Kitchen, Bathroom, Bedroom, LivingRoom };
std::string_view room_name(RoomKind room);
std::optional<RoomKind> room_from_name(std::string_view name);

namespace flags {
inline constexpr std::uint8_t kSliced = 1u << 0;
inline constexpr std::uint8_t kHeated = 1u << 1;
inline constexpr std::uint8_t kCooled = 1u << 2;
inline constexpr std::uint8_t kCleaned = 1u << 3;
inline constexpr std::uint8_t kToggledOn = 1u << 4;
}  // namespace flags

std::string flags_to_string(std::uint8_t f);
/// Parses a single flag name ("sliced", "heated", ...).
std::optional<std::uint8_t> flag_from_name(std::string_view name);

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct ObjectInstance {
  std::string category;
  Cell cell;
  std::uint8_t flags = 0;
  std::optional<std::size_t> contained_in;
  std::vector<std::size_t> holds;  // inverse of contained_in, ascending

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct Scene {
  std::string id;
  RoomKind room = RoomKind::Kitchen;
  int width = 1;
  int height = 1;
  std::vector<ObjectInstance> objects;

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Predicate over the final state: at least `min_count` instances of
/// `category` carry all `required_flags`, sit directly inside an instance of
/// `in_category` (when set) and are in the agent's hand (when `held`).
struct GoalCondition {
  std::string category;
  std::uint8_t required_flags = 0;
  std::optional<std::string> in_category;
  bool held = false;
  int min_count = 1;

  /// "apple sliced heated in:fridge count:2 held" style text.
  std::string to_string() const;
  static GoalCondition parse(std::string_view text);

  friend bool operator==(const GoalCondition&, const GoalCondition&) = default;
};

struct TaskSpec {
  std::string id;
  std::string scene_id;
  std::string task_type;
  std::string split;
  std::string instruction;
  std::vector<GoalCondition> goal_conditions;
  std::optional<SubgoalSequence> oracle_plan;
  /// Marks instructions whose wording admits more than one object category.
  bool ambiguous = false;
};

/// Per-category action capabilities.
struct Affordances {
  std::set<std::string> pickupable;
  std::set<std::string> receptacles;
  std::set<std::string> heaters;
  std::set<std::string> coolers;
  std::set<std::string> cleaners;
  std::set<std::string> slicers;
  std::set<std::string> sliceable;
  std::set<std::string> toggleable;

  /// Table for the shipped catalog.
  static Affordances defaults();
};

struct AgentState {
  Scene scene;
  std::optional<std::size_t> holding;
  std::vector<Subgoal> executed;
  /// Objects the agent has put down, in order. Pickup prefers other instances
  /// of the same category so "pick up X" twice gathers two objects.
  std::vector<std::size_t> placed;
  /// Counts per (cell, category): index (y * width + x) * |catalog| + category.
  std::vector<std::uint16_t> semantic_grid;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

enum class ExecReason { Ok, ObjectAbsent, AffordanceViolation, HandsFull, HandsEmpty, InjectedFailure };
std::string_view reason_name(ExecReason reason);

struct ExecOutcome {
  bool success = false;
  ExecReason reason = ExecReason::ObjectAbsent;
};

class EnvError : public std::runtime_error {
 public:
  enum class Kind { InvalidScene, InvalidTask, AlreadySatisfied, OracleFailure, DimensionMismatch };
  EnvError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct EnvConfig {
  /// Probability that an otherwise valid subgoal fails; drawn from a hash of
  /// (seed, step index, subgoal) so execution stays a pure function.
  double failure_rate = 0.0;
  std::uint64_t seed = 0;
};

class Environment {
 public:
  Environment(Catalog catalog, Affordances affordances = Affordances::defaults(),
              EnvConfig config = {});

  const Catalog& catalog() const noexcept { return catalog_; }
  const Affordances& affordances() const noexcept { return affordances_; }

  /// Throws EnvError(InvalidScene) for out-of-bounds cells, unknown
  /// categories or inconsistent containment.
  void validate_scene(const Scene& scene) const;
  /// Fresh state for the task. Throws InvalidScene/InvalidTask, or
  /// AlreadySatisfied when the goal holds before any action.
  AgentState reset(const Scene& scene, const TaskSpec& task) const;
  /// reset() plus an oracle-plan replay that must succeed at every step and
  /// reach reward 1 (OracleFailure otherwise).
  void validate_task(const Scene& scene, const TaskSpec& task) const;

  /// Failed executions return the input state unchanged.
  std::pair<AgentState, ExecOutcome> execute(const AgentState& state, const Subgoal& g) const;

  int reward(const TaskSpec& task, const AgentState& state) const;
  double goal_condition_fraction(const TaskSpec& task, const AgentState& state) const;
  bool condition_holds(const GoalCondition& c, const AgentState& state) const;

  /// Rebuilds the semantic grid from the scene objects.
  std::vector<std::uint16_t> semantic_grid(const Scene& scene) const;

 private:
  AgentState initial_state(const Scene& scene) const;
  ExecOutcome apply(AgentState& state, const Subgoal& g) const;

  Catalog catalog_;
  Affordances affordances_;
  EnvConfig config_;
};

/// Affine map applied to pooled per-category counts.
struct StateProjection {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // row-major out_dim x in_dim
  std::vector<double> bias;     // out_dim

  static StateProjection identity(std::size_t dim);
};

/// Per-category counts pooled over the grid (catalog order).
std::vector<double> pooled_counts(const AgentState& state, std::size_t catalog_size);
/// Pooled counts followed by the projection. Throws DimensionMismatch when
/// the projection input size differs from the catalog size.
std::vector<double> state_features(const AgentState& state, std::size_t catalog_size,
                                   const StateProjection& projection);

}  // namespace subplan
