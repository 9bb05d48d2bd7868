#include "subplan/benchmark.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "subplan/io.hpp"

namespace subplan {

using nlohmann::json;

Benchmark::Benchmark(std::vector<Scene> scenes, std::vector<TaskSpec> tasks)
    : scenes_(std::move(scenes)), tasks_(std::move(tasks)) {
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    if (!scene_index_.emplace(scenes_[i].id, i).second)
      throw EnvError(EnvError::Kind::InvalidScene, "duplicate scene id '" + scenes_[i].id + "'");
  }
  for (const auto& t : tasks_)
    if (!scene_index_.contains(t.scene_id))
      throw EnvError(EnvError::Kind::InvalidTask,
                     "task '" + t.id + "' names unknown scene '" + t.scene_id + "'");
}

const Scene& Benchmark::scene(std::string_view id) const {
  auto it = scene_index_.find(std::string(id));
  if (it == scene_index_.end()) throw std::out_of_range("unknown scene '" + std::string(id) + "'");
  return scenes_[it->second];
}

std::vector<const TaskSpec*> Benchmark::split(std::string_view name) const {
  std::vector<const TaskSpec*> out;
  for (const auto& t : tasks_)
    if (t.split == name) out.push_back(&t);
  return out;
}

std::vector<TrainingPair> Benchmark::training_pairs(std::string_view split_name) const {
  std::vector<TrainingPair> out;
  for (const auto* t : split(split_name))
    if (t->oracle_plan) out.push_back({t->instruction, *t->oracle_plan});
  return out;
}

std::vector<PoolEntry> Benchmark::pool(std::string_view split_name) const {
  std::vector<PoolEntry> out;
  for (const auto* t : split(split_name))
    if (t->oracle_plan) out.push_back({{t->instruction, *t->oracle_plan}, t->task_type});
  return out;
}

void Benchmark::validate(const Environment& env) const {
  for (const auto& t : tasks_) env.validate_task(scene(t.scene_id), t);
}

std::string scene_to_json_line(const Scene& scene) {
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json fl = json::array();
    for (std::uint8_t bit = 1; bit != 0 && bit <= flags::kToggledOn; bit <<= 1)
      if (o.flags & bit) fl.push_back(flags_to_string(bit));
    objs.push_back({{"category", o.category},
                    {"cell", {o.cell.x, o.cell.y}},
                    {"flags", fl},
                    {"in", o.contained_in ? json(*o.contained_in) : json(nullptr)}});
  }
  json j = {{"id", scene.id},
            {"room", std::string(room_name(scene.room))},
            {"width", scene.width},
            {"height", scene.height},
            {"objects", objs}};
  return j.dump();
}

Scene scene_from_json_line(std::string_view line) {
  try {
    const auto j = json::parse(line);
    Scene s;
    s.id = j.at("id").get<std::string>();
    const auto room = room_from_name(j.at("room").get<std::string>());
    if (!room) throw EnvError(EnvError::Kind::InvalidScene, "scene '" + s.id + "': unknown room");
    s.room = *room;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& jo : j.at("objects")) {
      ObjectInstance o;
      o.category = jo.at("category").get<std::string>();
      o.cell = {jo.at("cell").at(0).get<int>(), jo.at("cell").at(1).get<int>()};
      for (const auto& f : jo.value("flags", json::array())) {
        auto bit = flag_from_name(f.get<std::string>());
        if (!bit) throw EnvError(EnvError::Kind::InvalidScene, "scene '" + s.id + "': bad flag");
        o.flags |= *bit;
      }
      if (jo.contains("in") && !jo.at("in").is_null())
        o.contained_in = jo.at("in").get<std::size_t>();
      s.objects.push_back(std::move(o));
    }
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      if (auto c = s.objects[i].contained_in; c && *c < s.objects.size())
        s.objects[*c].holds.push_back(i);
    }
    return s;
  } catch (const json::exception& e) {
    throw EnvError(EnvError::Kind::InvalidScene, std::string("scene record: ") + e.what());
  }
}

std::string task_to_json_line(const TaskSpec& task) {
  json conds = json::array();
  for (const auto& c : task.goal_conditions) conds.push_back(c.to_string());
  json j = {{"id", task.id},
            {"scene", task.scene_id},
            {"type", task.task_type},
            {"split", task.split},
            {"instruction", task.instruction},
            {"conditions", conds},
            {"oracle_plan", task.oracle_plan ? json(serialize(*task.oracle_plan)) : json(nullptr)},
            {"ambiguous", task.ambiguous}};
  return j.dump();
}

TaskSpec task_from_json_line(std::string_view line, const Catalog& catalog) {
  try {
    const auto j = json::parse(line);
    TaskSpec t;
    t.id = j.at("id").get<std::string>();
    t.scene_id = j.at("scene").get<std::string>();
    t.task_type = j.value("type", "");
    t.split = j.value("split", "");
    t.instruction = j.at("instruction").get<std::string>();
    for (const auto& c : j.at("conditions"))
      t.goal_conditions.push_back(GoalCondition::parse(c.get<std::string>()));
    if (j.contains("oracle_plan") && !j.at("oracle_plan").is_null())
      t.oracle_plan = parse(j.at("oracle_plan").get<std::string>(), catalog);
    t.ambiguous = j.value("ambiguous", false);
    return t;
  } catch (const json::exception& e) {
    throw EnvError(EnvError::Kind::InvalidTask, std::string("task record: ") + e.what());
  }
}


Benchmark load_benchmark(const std::filesystem::path& scenes_path,
                         const std::filesystem::path& tasks_path, const Catalog& catalog) {
  std::vector<Scene> scenes;
  for (const auto& l : read_lines(scenes_path)) scenes.push_back(scene_from_json_line(l));
  std::vector<TaskSpec> tasks;
  for (const auto& l : read_lines(tasks_path)) tasks.push_back(task_from_json_line(l, catalog));
  return Benchmark(std::move(scenes), std::move(tasks));
}

Benchmark load_benchmark(const std::filesystem::path& dir, const Catalog& catalog) {
  return load_benchmark(dir / "scenes.jsonl", dir / "tasks.jsonl", catalog);
}

void save_benchmark(const std::filesystem::path& dir, const Benchmark& benchmark) {
  std::filesystem::create_directories(dir);
  std::string scenes, tasks;
  for (const auto& s : benchmark.scenes()) scenes += scene_to_json_line(s) + '\n';
  for (const auto& t : benchmark.tasks()) tasks += task_to_json_line(t) + '\n';
  write_file_atomic(dir / "scenes.jsonl", scenes);
  write_file_atomic(dir / "tasks.jsonl", tasks);
  const auto pairs = benchmark.training_pairs("train");
  write_file_atomic(dir / "train_pairs.tsv", format_training_pairs(pairs));
}

// ---------------------------------------------------------------------------
// Generator

const std::vector<std::string>& task_types() {
  static const std::vector<std::string> types{
      "place",   "place_sliced", "heat",     "heat_sliced", "cool",          "cool_sliced",
      "clean",   "look_at",      "pick_two", "movable",     "movable_sliced"};
  return types;
}

namespace {

// Descriptions that name an object without its catalog name. Each entry
// lists the categories a reader could confuse it with; the generator puts
// those in the scene as well so a wrong guess executes fine but misses the
// goal.
struct Alias {
  std::vector<std::string> confusable;
  std::vector<std::string> phrases;
};

const std::map<std::string, Alias>& aliases() {
  static const std::map<std::string, Alias> table{
      {"desklamp", {{"floorlamp"}, {"small lamp", "reading lamp", "little lamp"}}},
      {"floorlamp", {{"desklamp"}, {"tall lamp", "standing lamp", "lamp next to the desk"}}},
      {"sidetable", {{"diningtable"}, {"white table with shelving", "small table", "end table"}}},
      {"diningtable", {{"sidetable"}, {"big table", "long wooden table", "table by the side window"}}},
      {"saltshaker", {{"peppershaker"}, {"white shaker", "small white shaker"}}},
      {"peppershaker", {{"saltshaker"}, {"black shaker", "dark shaker"}}},
      {"winebottle", {{"glassbottle", "soapbottle"}, {"green bottle", "tall green bottle"}}},
      {"glassbottle", {{"winebottle", "soapbottle"}, {"clear bottle", "empty bottle"}}},
      {"soapbottle", {{"glassbottle", "winebottle"}, {"pump bottle", "squeeze bottle"}}},
      {"butterknife", {{"knife"}, {"knife", "dull knife"}}},
      {"knife", {{"butterknife"}, {"sharp knife", "big knife"}}},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& templates() {
  static const std::map<std::string, std::vector<std::string>> t{
      {"place",
       {"put the {o} on the {r}", "place the {o} in the {r}", "move the {o} to the {r}",
        "take the {o} and put it on the {r}"}},
      {"place_sliced",
       {"put a slice of {o} on the {r}", "slice the {o} and put it on the {r}",
        "cut up the {o} and place it on the {r}"}},
      {"heat",
       {"heat the {o} and put it on the {r}", "put a warm {o} on the {r}",
        "microwave the {o} then place it on the {r}"}},
      {"heat_sliced",
       {"put a heated slice of {o} on the {r}", "slice the {o} and warm it then put it on the {r}",
        "cook a slice of {o} and place it on the {r}"}},
      {"cool",
       {"chill the {o} and put it on the {r}", "put a cold {o} on the {r}",
        "cool the {o} in the fridge then place it on the {r}"}},
      {"cool_sliced",
       {"put a chilled slice of {o} on the {r}", "slice the {o} and cool it then put it on the {r}",
        "place a cold piece of {o} on the {r}"}},
      {"clean",
       {"rinse the {o} and put it on the {r}", "put a clean {o} on the {r}",
        "wash the {o} in the sink then place it on the {r}"}},
      {"look_at",
       {"look at the {o} under the {l}", "examine the {o} by the light of the {l}",
        "pick up the {o} and turn on the {l}", "hold the {o} near the {l}"}},
      {"pick_two",
       {"put two {o} on the {r}", "place a pair of {o} on the {r}", "move both {o} to the {r}"}},
      {"movable",
       {"put a {c} with a {o} in it on the {r}", "place the {o} in a {c} and move it to the {r}",
        "carry the {o} in the {c} to the {r}"}},
      {"movable_sliced",
       {"put a {c} with a slice of {o} on the {r}",
        "slice the {o} and put a piece in the {c} then move it to the {r}",
        "carry a slice of {o} in the {c} to the {r}"}},
  };
  return t;
}

const std::vector<std::string> kSurfaces{"diningtable", "sidetable", "shelf", "cart", "ottoman"};

struct RoomSpec {
  RoomKind room;
  std::vector<std::string> fixtures;
  std::vector<std::string> items;
  bool lamps;
};

const std::vector<RoomSpec>& rooms() {
  static const std::vector<RoomSpec> r{
      {RoomKind::Kitchen,
       {"fridge", "microwave", "sink", "diningtable", "sidetable", "shelf", "cart"},
       {"apple", "egg", "fork", "spoon", "ladle", "knife", "butterknife", "cup", "bowl", "pot",
        "pan", "kettle", "peppershaker", "saltshaker", "winebottle", "glassbottle"},
       false},
      {RoomKind::Bathroom,
       {"sink", "shelf", "cart", "sidetable"},
       {"soapbottle", "cup", "glassbottle", "vase", "bowl"},
       false},
      {RoomKind::Bedroom,
       {"sidetable", "shelf", "ottoman"},
       {"pencil", "vase", "cup", "bowl", "glassbottle", "winebottle", "wateringcan"},
       true},
      {RoomKind::LivingRoom,
       {"sidetable", "diningtable", "shelf", "ottoman", "cart"},
       {"pencil", "vase", "wateringcan", "cup", "bowl", "glassbottle", "winebottle", "kettle",
        "saltshaker", "peppershaker"},
       true},
  };
  return r;
}

const RoomSpec& room_spec(RoomKind k) {
  for (const auto& r : rooms())
    if (r.room == k) return r;
  throw std::logic_error("room without spec");
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v.at(below(v.size()));
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

struct Draft {
  RoomKind room = RoomKind::Kitchen;
  std::string o, r, c, l, k;  // slot categories; empty when unused
  std::size_t o_count = 1;
};

// Assembles the scene around the task objects. Task objects never start
// inside their goal receptacle.
Scene build_scene(const std::string& id, const Draft& d, const std::set<std::string>& extra,
                  Rng& rng) {
  const auto& spec = room_spec(d.room);
  Scene s;
  s.id = id;
  s.room = d.room;
  s.width = 6;
  s.height = 6;

  std::vector<Cell> cells;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) cells.push_back({x, y});
  rng.shuffle(cells);
  std::size_t next_cell = 0;

  std::set<std::string> fixtures(spec.fixtures.begin(), spec.fixtures.end());
  if (!d.r.empty()) fixtures.insert(d.r);
  std::set<std::string> lamps;
  if (!d.l.empty()) lamps.insert(d.l);
  std::set<std::string> items;
  if (!d.o.empty()) items.insert(d.o);
  if (!d.c.empty()) items.insert(d.c);
  if (!d.k.empty()) items.insert(d.k);
  for (const auto& e : extra) {
    if (e == "desklamp" || e == "floorlamp")
      lamps.insert(e);
    else if (std::find(kSurfaces.begin(), kSurfaces.end(), e) != kSurfaces.end())
      fixtures.insert(e);
    else
      items.insert(e);
  }
  if (spec.lamps && lamps.empty()) lamps.insert(rng.below(2) ? "desklamp" : "floorlamp");

  std::vector<std::size_t> surfaces;
  for (const auto& f : fixtures) {
    s.objects.push_back({f, cells[next_cell++], 0, std::nullopt, {}});
    if (std::find(kSurfaces.begin(), kSurfaces.end(), f) != kSurfaces.end())
      surfaces.push_back(s.objects.size() - 1);
  }
  for (const auto& l : lamps) s.objects.push_back({l, cells[next_cell++], 0, std::nullopt, {}});

  auto place_on = [&](const std::string& cat, bool avoid_goal) {
    std::vector<std::size_t> ok;
    for (auto i : surfaces)
      if (!avoid_goal || s.objects[i].category != d.r) ok.push_back(i);
    const auto host = rng.pick(ok);
    s.objects.push_back({cat, s.objects[host].cell, 0, host, {}});
    s.objects[host].holds.push_back(s.objects.size() - 1);
  };

  for (const auto& it : items) {
    const std::size_t n = it == d.o ? d.o_count : 1;
    for (std::size_t i = 0; i < n; ++i) place_on(it, true);
  }
  std::vector<std::string> pool;
  for (const auto& it : spec.items)
    if (!items.contains(it)) pool.push_back(it);
  rng.shuffle(pool);
  const std::size_t distractors = 2 + rng.below(3);
  for (std::size_t i = 0; i < distractors && i < pool.size(); ++i) place_on(pool[i], false);
  return s;
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
    text.replace(pos, key.size(), value);
  return text;
}

std::vector<std::string> surfaces_in(RoomKind room) {
  std::vector<std::string> out;
  for (const auto& f : room_spec(room).fixtures)
    if (std::find(kSurfaces.begin(), kSurfaces.end(), f) != kSurfaces.end()) out.push_back(f);
  return out;
}

std::optional<TaskSpec> draw_task(const Environment& env, const std::string& type,
                                  const std::string& split, const std::string& id, double amb_rate,
                                  Rng& rng, Scene& scene_out) {
  const auto& cat = env.catalog();
  auto sg = [&](ActionType a, const std::string& obj) { return Subgoal{a, cat.at(obj)}; };

  const bool sliced = type.ends_with("_sliced");
  const std::vector<std::string> sliceable{"apple", "egg"};
  Draft d;
  std::vector<RoomKind> room_choices;
  if (type == "heat" || type == "cool" || sliced)
    room_choices = {RoomKind::Kitchen};
  else if (type == "clean")
    room_choices = {RoomKind::Kitchen, RoomKind::Bathroom};
  else if (type == "look_at")
    room_choices = {RoomKind::Bedroom, RoomKind::LivingRoom};
  else if (type == "movable")
    room_choices = {RoomKind::Kitchen, RoomKind::LivingRoom};
  else
    room_choices = {RoomKind::Kitchen, RoomKind::Bathroom, RoomKind::Bedroom,
                    RoomKind::LivingRoom};
  d.room = rng.pick(room_choices);
  const auto& spec = room_spec(d.room);

  auto choose_r = [&] {
    auto surf = surfaces_in(d.room);
    std::vector<std::string> tables;
    for (const auto& s : surf)
      if (s == "diningtable" || s == "sidetable") tables.push_back(s);
    if (!tables.empty() && rng.uniform() < 0.5) return rng.pick(tables);
    return rng.pick(surf);
  };

  if (sliced) {
    d.o = rng.pick(sliceable);
    d.k = rng.below(2) ? "knife" : "butterknife";
  } else if (type == "heat") {
    d.o = rng.pick(std::vector<std::string>{"apple", "egg", "cup", "bowl"});
  } else if (type == "cool") {
    d.o = rng.pick(std::vector<std::string>{"apple", "egg", "cup", "bowl", "pot", "pan",
                                            "winebottle"});
  } else if (type == "clean") {
    d.o = d.room == RoomKind::Kitchen
              ? rng.pick(std::vector<std::string>{"fork", "spoon", "ladle", "cup", "bowl", "pot",
                                                  "pan", "knife", "butterknife", "kettle"})
              : rng.pick(std::vector<std::string>{"cup", "bowl", "soapbottle", "vase"});
  } else if (type == "look_at") {
    d.o = rng.pick(spec.items);
    d.l = rng.below(2) ? "desklamp" : "floorlamp";
  } else if (type == "pick_two") {
    d.o = rng.pick(spec.items);
    d.o_count = 2;
  } else if (type == "movable") {
    d.c = rng.pick(std::vector<std::string>{"cup", "bowl", "pot", "pan"});
    std::vector<std::string> small{"fork", "spoon", "pencil", "apple", "egg", "saltshaker",
                                   "peppershaker", "knife", "butterknife"};
    if (d.room == RoomKind::LivingRoom) small = {"pencil", "saltshaker", "peppershaker"};
    d.o = rng.pick(small);
  } else {
    d.o = rng.pick(spec.items);
  }
  if (type == "movable_sliced") d.c = rng.pick(std::vector<std::string>{"cup", "bowl", "pot", "pan"});
  if (type != "look_at") d.r = choose_r();

  // Slot wording: catalog name or an ambiguous description.
  bool ambiguous = false;
  std::set<std::string> extra;
  auto word = [&](const std::string& category) -> std::string {
    auto it = aliases().find(category);
    if (it != aliases().end() && rng.uniform() < amb_rate) {
      ambiguous = true;
      extra.insert(it->second.confusable.begin(), it->second.confusable.end());
      return rng.pick(it->second.phrases);
    }
    return cat.at(category).display;
  };

  std::string text = rng.pick(templates().at(type));
  if (!d.o.empty()) text = replace_all(text, "{o}", word(d.o));
  if (!d.r.empty()) text = replace_all(text, "{r}", word(d.r));
  if (!d.c.empty()) text = replace_all(text, "{c}", cat.at(d.c).display);
  if (!d.l.empty()) text = replace_all(text, "{l}", word(d.l));
  for (const auto& o : {d.o, d.c, d.k})
    if (!o.empty()) extra.erase(o);

  std::vector<Subgoal> plan;
  std::vector<GoalCondition> conds;
  const std::uint8_t treat = type.starts_with("heat")   ? flags::kHeated
                             : type.starts_with("cool") ? flags::kCooled
                             : type == "clean"          ? flags::kCleaned
                                                        : 0;
  if (sliced) {
    plan.push_back(sg(ActionType::Pickup, d.k));
    plan.push_back(sg(ActionType::Slice, d.o));
    plan.push_back(sg(ActionType::Put, d.r));
  }
  if (type == "look_at") {
    plan = {sg(ActionType::Pickup, d.o), sg(ActionType::ToggleOn, d.l)};
    conds.push_back({d.o, 0, std::nullopt, true, 1});
    conds.push_back({d.l, flags::kToggledOn, std::nullopt, false, 1});
  } else if (type == "pick_two") {
    plan = {sg(ActionType::Pickup, d.o), sg(ActionType::Put, d.r), sg(ActionType::Pickup, d.o),
            sg(ActionType::Put, d.r)};
    conds.push_back({d.o, 0, d.r, false, 2});
  } else if (type.starts_with("movable")) {
    plan.push_back(sg(ActionType::Pickup, d.o));
    plan.push_back(sg(ActionType::Put, d.c));
    plan.push_back(sg(ActionType::Pickup, d.c));
    plan.push_back(sg(ActionType::Put, d.r));
    conds.push_back({d.o, static_cast<std::uint8_t>(sliced ? flags::kSliced : 0), d.c, false, 1});
    conds.push_back({d.c, 0, d.r, false, 1});
  } else {
    plan.push_back(sg(ActionType::Pickup, d.o));
    if (treat == flags::kHeated) plan.push_back(sg(ActionType::Heat, "microwave"));
    if (treat == flags::kCooled) plan.push_back(sg(ActionType::Cool, "fridge"));
    if (treat == flags::kCleaned) plan.push_back(sg(ActionType::Clean, "sink"));
    plan.push_back(sg(ActionType::Put, d.r));
    conds.push_back(
        {d.o, static_cast<std::uint8_t>(treat | (sliced ? flags::kSliced : 0)), d.r, false, 1});
  }

  scene_out = build_scene("scene_" + id, d, extra, rng);
  TaskSpec t;
  t.id = id;
  t.scene_id = scene_out.id;
  t.task_type = type;
  t.split = split;
  t.instruction = text;
  t.goal_conditions = std::move(conds);
  t.oracle_plan = SubgoalSequence{std::move(plan), true};
  t.ambiguous = ambiguous;
  try {
    env.validate_task(scene_out, t);
  } catch (const EnvError&) {
    return std::nullopt;
  }
  return t;
}

}  // namespace

Benchmark generate_benchmark(const Environment& env, const GeneratorConfig& config) {
  Rng rng(config.seed);
  std::vector<Scene> scenes;
  std::vector<TaskSpec> tasks;
  const std::vector<std::pair<std::string, std::size_t>> splits{
      {"train", config.train_per_type},
      {"feedback", config.feedback_per_type},
      {"eval", config.eval_per_type}};
  for (const auto& [split, count] : splits) {
    for (const auto& type : task_types()) {
      for (std::size_t i = 0; i < count; ++i) {
        const std::string id = split + "_" + type + "_" + std::to_string(i);
        for (int attempt = 0;; ++attempt) {
          if (attempt == 100)
            throw EnvError(EnvError::Kind::OracleFailure,
                           "generator could not build a valid task " + id);
          Scene scene;
          auto t = draw_task(env, type, split, id, config.ambiguity_rate, rng, scene);
          if (!t) continue;
          scenes.push_back(std::move(scene));
          tasks.push_back(std::move(*t));
          break;
        }
      }
    }
  }
  return Benchmark(std::move(scenes), std::move(tasks));
}

}  // namespace subplan
