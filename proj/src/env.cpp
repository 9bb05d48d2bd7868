#include "subplan/env.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <sstream>

#include "subplan/hash.hpp"

namespace subplan {

namespace {

constexpr std::array<std::pair<std::uint8_t, std::string_view>, 5> kFlagNames = {{
    {flags::kSliced, "sliced"},
    {flags::kHeated, "heated"},
    {flags::kCooled, "cooled"},
    {flags::kCleaned, "cleaned"},
    {flags::kToggledOn, "toggled_on"},
}};

constexpr std::array<std::pair<RoomKind, std::string_view>, 4> kRoomNames = {{
    {RoomKind::Kitchen, "kitchen"},
    {RoomKind::Bathroom, "bathroom"},
    {RoomKind::Bedroom, "bedroom"},
    {RoomKind::LivingRoom, "livingroom"},
}};

bool is_within(const Scene& scene, std::size_t obj, std::size_t ancestor) {
  std::optional<std::size_t> cur = obj;
  std::size_t guard = 0;
  while (cur && guard++ <= scene.objects.size()) {
    if (*cur == ancestor) return true;
    cur = scene.objects[*cur].contained_in;
  }
  return false;
}

void set_cell_recursive(Scene& scene, std::size_t obj, Cell cell) {
  scene.objects[obj].cell = cell;
  for (auto child : scene.objects[obj].holds) set_cell_recursive(scene, child, cell);
}

void detach(Scene& scene, std::size_t obj) {
  auto& o = scene.objects[obj];
  if (!o.contained_in) return;
  auto& holds = scene.objects[*o.contained_in].holds;
  holds.erase(std::remove(holds.begin(), holds.end(), obj), holds.end());
  o.contained_in.reset();
}

}  // namespace

std::string_view room_name(RoomKind room) {
  for (const auto& [r, n] : kRoomNames)
    if (r == room) return n;
  return "?";
}

std::optional<RoomKind> room_from_name(std::string_view name) {
  for (const auto& [r, n] : kRoomNames)
    if (n == name) return r;
  return std::nullopt;
}

std::string flags_to_string(std::uint8_t f) {
  std::string out;
  for (const auto& [bit, name] : kFlagNames) {
    if (!(f & bit)) continue;
    if (!out.empty()) out += ' ';
    out += name;
  }
  return out;
}

std::optional<std::uint8_t> flag_from_name(std::string_view name) {
  for (const auto& [bit, n] : kFlagNames)
    if (n == name) return bit;
  return std::nullopt;
}

std::string_view reason_name(ExecReason reason) {
  switch (reason) {
    case ExecReason::Ok: return "ok";
    case ExecReason::ObjectAbsent: return "object_absent";
    case ExecReason::AffordanceViolation: return "affordance_violation";
    case ExecReason::HandsFull: return "hands_full";
    case ExecReason::HandsEmpty: return "hands_empty";
    case ExecReason::InjectedFailure: return "injected_failure";
  }
  return "?";
}

std::string GoalCondition::to_string() const {
  std::string out = category;
  if (required_flags) out += ' ' + flags_to_string(required_flags);
  if (in_category) out += " in:" + *in_category;
  if (min_count != 1) out += " count:" + std::to_string(min_count);
  if (held) out += " held";
  return out;
}

GoalCondition GoalCondition::parse(std::string_view text) {
  std::istringstream is{std::string(text)};
  GoalCondition c;
  if (!(is >> c.category))
    throw EnvError(EnvError::Kind::InvalidTask, "empty goal condition");
  std::string word;
  while (is >> word) {
    if (word == "held") {
      c.held = true;
    } else if (word.starts_with("in:") && word.size() > 3) {
      c.in_category = word.substr(3);
    } else if (word.starts_with("count:")) {
      try {
        c.min_count = std::stoi(word.substr(6));
      } catch (const std::exception&) {
        throw EnvError(EnvError::Kind::InvalidTask, "bad count in goal condition '" +
                                                        std::string(text) + "'");
      }
      if (c.min_count < 1)
        throw EnvError(EnvError::Kind::InvalidTask, "count must be >= 1 in '" +
                                                        std::string(text) + "'");
    } else if (auto f = flag_from_name(word)) {
      c.required_flags |= *f;
    } else {
      throw EnvError(EnvError::Kind::InvalidTask,
                     "unknown goal-condition term '" + word + "' in '" + std::string(text) + "'");
    }
  }
  return c;
}

Affordances Affordances::defaults() {
  Affordances a;
  a.pickupable = {"apple",      "egg",         "fork",        "spoon",      "ladle",
                  "knife",      "butterknife", "cup",         "bowl",       "pot",
                  "pan",        "kettle",      "vase",        "pencil",     "wateringcan",
                  "glassbottle", "winebottle", "soapbottle",  "peppershaker", "saltshaker"};
  a.receptacles = {"cup",   "bowl",        "pot",       "pan",   "microwave", "fridge", "sink",
                   "table", "diningtable", "sidetable", "shelf", "cart",      "ottoman"};
  a.heaters = {"microwave"};
  a.coolers = {"fridge"};
  a.cleaners = {"sink"};
  a.slicers = {"knife", "butterknife"};
  a.sliceable = {"apple", "egg"};
  a.toggleable = {"desklamp", "floorlamp"};
  return a;
}

Environment::Environment(Catalog catalog, Affordances affordances, EnvConfig config)
    : catalog_(std::move(catalog)), affordances_(std::move(affordances)), config_(config) {
  if (!(config_.failure_rate >= 0.0 && config_.failure_rate <= 1.0))
    throw EnvError(EnvError::Kind::InvalidScene, "failure_rate must lie in [0, 1]");
}

void Environment::validate_scene(const Scene& scene) const {
  auto fail = [&](const std::string& msg) {
    throw EnvError(EnvError::Kind::InvalidScene, "scene '" + scene.id + "': " + msg);
  };
  if (scene.width < 1 || scene.height < 1) fail("grid dimensions must be positive");
  const auto n = scene.objects.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = scene.objects[i];
    const auto tag = "object " + std::to_string(i) + " (" + o.category + ")";
    if (!catalog_.contains(o.category)) fail(tag + " has a category outside the catalog");
    if (o.cell.x < 0 || o.cell.y < 0 || o.cell.x >= scene.width || o.cell.y >= scene.height)
      fail(tag + " lies outside the grid");
    if (o.contained_in) {
      const auto c = *o.contained_in;
      if (c >= n || c == i) fail(tag + " has an invalid container");
      if (!affordances_.receptacles.contains(scene.objects[c].category))
        fail(tag + " is inside a non-receptacle");
      if (scene.objects[c].cell != o.cell) fail(tag + " is not in its container's cell");
      const auto& h = scene.objects[c].holds;
      if (std::find(h.begin(), h.end(), i) == h.end()) fail(tag + " is missing from holds");
    }
    if (!std::is_sorted(o.holds.begin(), o.holds.end())) fail(tag + " holds list is unsorted");
    for (auto child : o.holds)
      if (child >= n || scene.objects[child].contained_in != i)
        fail(tag + " holds an object that is not inside it");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::size_t> cur = scene.objects[i].contained_in;
    std::size_t steps = 0;
    while (cur) {
      if (*cur == i || ++steps > n) fail("containment cycle through object " + std::to_string(i));
      cur = scene.objects[*cur].contained_in;
    }
  }
}

std::vector<std::uint16_t> Environment::semantic_grid(const Scene& scene) const {
  const auto c = catalog_.size();
  std::vector<std::uint16_t> grid(static_cast<std::size_t>(scene.width) * scene.height * c, 0);
  for (const auto& o : scene.objects) {
    const auto cat = catalog_.index_of(o.category);
    if (!cat) continue;
    const auto cell = static_cast<std::size_t>(o.cell.y) * scene.width + o.cell.x;
    ++grid[cell * c + *cat];
  }
  return grid;
}

AgentState Environment::initial_state(const Scene& scene) const {
  AgentState s;
  s.scene = scene;
  s.semantic_grid = semantic_grid(scene);
  return s;
}

AgentState Environment::reset(const Scene& scene, const TaskSpec& task) const {
  validate_scene(scene);
  if (task.goal_conditions.empty())
    throw EnvError(EnvError::Kind::InvalidTask, "task '" + task.id + "' has no goal conditions");
  for (const auto& c : task.goal_conditions) {
    if (!catalog_.contains(c.category) || (c.in_category && !catalog_.contains(*c.in_category)))
      throw EnvError(EnvError::Kind::InvalidTask,
                     "task '" + task.id + "' condition '" + c.to_string() +
                         "' names a category outside the catalog");
  }
  auto s = initial_state(scene);
  if (reward(task, s) == 1)
    throw EnvError(EnvError::Kind::AlreadySatisfied,
                   "task '" + task.id + "' is satisfied before any action");
  return s;
}

void Environment::validate_task(const Scene& scene, const TaskSpec& task) const {
  auto s = reset(scene, task);
  if (!task.oracle_plan) return;
  for (const auto& g : task.oracle_plan->steps) {
    auto [next, outcome] = execute(s, g);
    if (!outcome.success)
      throw EnvError(EnvError::Kind::OracleFailure,
                     "task '" + task.id + "': oracle step " + to_debug_string(g) + " failed (" +
                         std::string(reason_name(outcome.reason)) + ")");
    s = std::move(next);
  }
  if (reward(task, s) != 1)
    throw EnvError(EnvError::Kind::OracleFailure,
                   "task '" + task.id + "': oracle plan does not satisfy the goal");
}

ExecOutcome Environment::apply(AgentState& state, const Subgoal& g) const {
  auto& scene = state.scene;
  auto& objs = scene.objects;
  const auto& cat = g.object.id;
  const auto held = state.holding;

  auto find = [&](auto&& extra_ok) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < objs.size(); ++i)
      if (objs[i].category == cat && (!held || i != *held) && extra_ok(i)) return i;
    return std::nullopt;
  };
  auto any = [](std::size_t) { return true; };
  auto ok = ExecOutcome{true, ExecReason::Ok};
  auto fail = [](ExecReason r) { return ExecOutcome{false, r}; };

  switch (g.action) {
    case ActionType::Pickup: {
      if (held) return fail(ExecReason::HandsFull);
      if (!affordances_.pickupable.contains(cat)) return fail(ExecReason::AffordanceViolation);
      auto placed = [&](std::size_t i) {
        return std::find(state.placed.begin(), state.placed.end(), i) != state.placed.end();
      };
      auto target = find([&](std::size_t i) { return !placed(i); });
      if (!target) target = find(any);
      if (!target) return fail(ExecReason::ObjectAbsent);
      detach(scene, *target);
      state.holding = *target;
      return ok;
    }
    case ActionType::Put: {
      if (!held) return fail(ExecReason::HandsEmpty);
      if (!affordances_.receptacles.contains(cat)) return fail(ExecReason::AffordanceViolation);
      auto target = find([&](std::size_t i) { return !is_within(scene, i, *held); });
      if (!target) return fail(ExecReason::ObjectAbsent);
      objs[*held].contained_in = *target;
      auto& holds = objs[*target].holds;
      holds.insert(std::upper_bound(holds.begin(), holds.end(), *held), *held);
      set_cell_recursive(scene, *held, objs[*target].cell);
      state.placed.push_back(*held);
      state.holding.reset();
      return ok;
    }
    case ActionType::Heat:
    case ActionType::Cool:
    case ActionType::Clean: {
      if (!held) return fail(ExecReason::HandsEmpty);
      const auto& table = g.action == ActionType::Heat   ? affordances_.heaters
                          : g.action == ActionType::Cool ? affordances_.coolers
                                                         : affordances_.cleaners;
      if (!table.contains(cat)) return fail(ExecReason::AffordanceViolation);
      if (!find(any)) return fail(ExecReason::ObjectAbsent);
      objs[*held].flags |= g.action == ActionType::Heat   ? flags::kHeated
                           : g.action == ActionType::Cool ? flags::kCooled
                                                          : flags::kCleaned;
      return ok;
    }
    case ActionType::Slice: {
      if (!held) return fail(ExecReason::HandsEmpty);
      if (!affordances_.slicers.contains(objs[*held].category) ||
          !affordances_.sliceable.contains(cat))
        return fail(ExecReason::AffordanceViolation);
      auto target = find([&](std::size_t i) { return !(objs[i].flags & flags::kSliced); });
      if (!target) target = find(any);
      if (!target) return fail(ExecReason::ObjectAbsent);
      objs[*target].flags |= flags::kSliced;
      return ok;
    }
    case ActionType::ToggleOn: {
      if (!affordances_.toggleable.contains(cat)) return fail(ExecReason::AffordanceViolation);
      auto target = find([&](std::size_t i) { return !(objs[i].flags & flags::kToggledOn); });
      if (!target) target = find(any);
      if (!target) return fail(ExecReason::ObjectAbsent);
      objs[*target].flags |= flags::kToggledOn;
      return ok;
    }
  }
  return fail(ExecReason::AffordanceViolation);
}

std::pair<AgentState, ExecOutcome> Environment::execute(const AgentState& state,
                                                        const Subgoal& g) const {
  AgentState next = state;
  auto outcome = apply(next, g);
  if (!outcome.success) return {state, outcome};
  if (config_.failure_rate > 0.0) {
    std::uint64_t h = splitmix64(config_.seed ^ splitmix64(state.executed.size()));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(g.action) << 56) ^ fnv1a(g.object.id));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u < config_.failure_rate) return {state, {false, ExecReason::InjectedFailure}};
  }
  next.executed.push_back(g);
  next.semantic_grid = semantic_grid(next.scene);
  return {std::move(next), outcome};
}

bool Environment::condition_holds(const GoalCondition& c, const AgentState& state) const {
  const auto& objs = state.scene.objects;
  int count = 0;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const auto& o = objs[i];
    if (o.category != c.category) continue;
    if ((o.flags & c.required_flags) != c.required_flags) continue;
    if (c.in_category &&
        (!o.contained_in || objs[*o.contained_in].category != *c.in_category))
      continue;
    if (c.held && state.holding != i) continue;
    ++count;
  }
  return count >= c.min_count;
}

int Environment::reward(const TaskSpec& task, const AgentState& state) const {
  if (task.goal_conditions.empty()) return 0;
  for (const auto& c : task.goal_conditions)
    if (!condition_holds(c, state)) return 0;
  return 1;
}

double Environment::goal_condition_fraction(const TaskSpec& task, const AgentState& state) const {
  if (task.goal_conditions.empty()) return 0.0;
  std::size_t met = 0;
  for (const auto& c : task.goal_conditions) met += condition_holds(c, state) ? 1 : 0;
  return static_cast<double>(met) / static_cast<double>(task.goal_conditions.size());
}

StateProjection StateProjection::identity(std::size_t dim) {
  StateProjection p;
  p.in_dim = p.out_dim = dim;
  p.weights.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) p.weights[i * dim + i] = 1.0;
  p.bias.assign(dim, 0.0);
  return p;
}

std::vector<double> pooled_counts(const AgentState& state, std::size_t catalog_size) {
  std::vector<double> out(catalog_size, 0.0);
  if (catalog_size == 0) return out;
  for (std::size_t i = 0; i < state.semantic_grid.size(); ++i)
    out[i % catalog_size] += state.semantic_grid[i];
  return out;
}

std::vector<double> state_features(const AgentState& state, std::size_t catalog_size,
                                   const StateProjection& projection) {
  if (projection.in_dim != catalog_size ||
      projection.weights.size() != projection.in_dim * projection.out_dim ||
      projection.bias.size() != projection.out_dim)
    throw EnvError(EnvError::Kind::DimensionMismatch,
                   "state projection expects " + std::to_string(projection.in_dim) +
                       " inputs but the catalog has " + std::to_string(catalog_size));
  if (!state.semantic_grid.empty() && state.semantic_grid.size() % catalog_size != 0)
    throw EnvError(EnvError::Kind::DimensionMismatch,
                   "semantic grid size is not a multiple of the catalog size");
  const auto pooled = pooled_counts(state, catalog_size);
  std::vector<double> out(projection.bias);
  for (std::size_t r = 0; r < projection.out_dim; ++r)
    for (std::size_t c = 0; c < projection.in_dim; ++c)
      out[r] += projection.weights[r * projection.in_dim + c] * pooled[c];
  return out;
}

}  // namespace subplan
