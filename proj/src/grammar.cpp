#include "subplan/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace subplan {

namespace {

struct ActionInfo {
  ActionType action;
  std::string_view name;
  std::string_view phrase;
};

constexpr std::array<ActionInfo, 7> kActionInfo = {{
    {ActionType::Pickup, "Pickup", "pick up"},
    {ActionType::Put, "Put", "put in"},
    {ActionType::Heat, "Heat", "heat in"},
    {ActionType::Cool, "Cool", "cool in"},
    {ActionType::Clean, "Clean", "clean in"},
    {ActionType::Slice, "Slice", "slice"},
    {ActionType::ToggleOn, "ToggleOn", "turn on"},
}};

const ActionInfo& info(ActionType action) {
  return kActionInfo[static_cast<std::size_t>(action)];
}

bool valid_display(std::string_view s) {
  if (s.empty() || s.front() == ' ' || s.back() == ' ') return false;
  if (s.find("  ") != std::string_view::npos) return false;
  return s.find_first_of(",.=\t\r\n") == std::string_view::npos;
}

bool valid_id(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// End of the current subgoal span: the next ',' or '.' or end of text.
std::size_t span_end_from(std::string_view text, std::size_t pos) {
  auto e = text.find_first_of(",.", pos);
  return e == std::string_view::npos ? text.size() : e;
}

}  // namespace

GrammarError::GrammarError(Kind kind, std::string message, std::size_t span_begin,
                           std::size_t span_end)
    : std::runtime_error(std::move(message)),
      kind_(kind),
      span_begin_(span_begin),
      span_end_(span_end) {}

std::string_view action_name(ActionType action) { return info(action).name; }
std::string_view action_phrase(ActionType action) { return info(action).phrase; }

std::optional<ActionType> action_from_name(std::string_view name) {
  for (const auto& a : kActionInfo)
    if (a.name == name) return a.action;
  return std::nullopt;
}

Catalog::Catalog(std::vector<ObjectType> objects) : objects_(std::move(objects)) {
  std::unordered_map<std::string, std::size_t> displays;
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    const auto& o = objects_[i];
    if (!valid_id(o.id))
      throw GrammarError(GrammarError::Kind::InvalidCatalog, "invalid object id '" + o.id + "'");
    if (!valid_display(o.display))
      throw GrammarError(GrammarError::Kind::InvalidCatalog,
                         "invalid display '" + o.display + "' for object '" + o.id + "'");
    if (!by_id_.emplace(o.id, i).second)
      throw GrammarError(GrammarError::Kind::InvalidCatalog, "duplicate object id '" + o.id + "'");
    if (!displays.emplace(o.display, i).second)
      throw GrammarError(GrammarError::Kind::InvalidCatalog,
                         "duplicate display '" + o.display + "'");
  }
}

Catalog Catalog::parse(std::string_view text) {
  std::vector<ObjectType> objects;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw GrammarError(GrammarError::Kind::InvalidCatalog,
                         "catalog line " + std::to_string(line_no) + ": expected id<TAB>display");
    objects.push_back({std::string(trim(line.substr(0, tab))),
                       std::string(trim(line.substr(tab + 1)))});
  }
  return Catalog(std::move(objects));
}

Catalog Catalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw GrammarError(GrammarError::Kind::InvalidCatalog,
                       "cannot open catalog '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Catalog::to_text() const {
  std::string out;
  for (const auto& o : objects_) out += o.id + '\t' + o.display + '\n';
  return out;
}

std::optional<std::size_t> Catalog::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const ObjectType& Catalog::at(std::string_view id) const {
  auto i = index_of(id);
  if (!i)
    throw GrammarError(GrammarError::Kind::UnknownObject,
                       "object '" + std::string(id) + "' is not in the catalog");
  return objects_[*i];
}

Catalog Catalog::subset(std::span<const std::string> ids) const {
  std::vector<ObjectType> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(at(id));
  return Catalog(std::move(out));
}

PlanStep step_at(const SubgoalSequence& plan, std::size_t i) {
  if (i >= plan.steps.size()) return std::nullopt;
  return plan.steps[i];
}

std::string verbalize(const Subgoal& g) {
  std::string out(action_phrase(g.action));
  out += ' ';
  out += g.object.display;
  return out;
}

std::string serialize(const SubgoalSequence& plan) {
  if (plan.steps.empty())
    throw GrammarError(GrammarError::Kind::EmptyPlan, "cannot serialize an empty plan");
  std::string out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (i) out += kSeparator;
    out += verbalize(plan.steps[i]);
  }
  if (plan.terminated) out += kStopMarker;
  return out;
}

SubgoalSequence parse(std::string_view text, const Catalog& catalog) {
  using Kind = GrammarError::Kind;
  SubgoalSequence out;
  if (text.empty()) throw GrammarError(Kind::MalformedSequence, "empty plan text", 0, 0);

  std::size_t pos = 0;
  while (true) {
    const auto rest = text.substr(pos);
    const ActionInfo* action = nullptr;
    for (const auto& a : kActionInfo) {
      if (rest.size() > a.phrase.size() && rest.starts_with(a.phrase) &&
          rest[a.phrase.size()] == ' ') {
        action = &a;
        break;
      }
    }
    if (!action) {
      auto e = span_end_from(text, pos);
      throw GrammarError(Kind::UnknownAction,
                         "unknown action in '" + std::string(text.substr(pos, e - pos)) + "'",
                         pos, e);
    }
    const std::size_t obj_pos = pos + action->phrase.size() + 1;
    const auto obj_rest = text.substr(obj_pos);

    // Longest display followed directly by a separator or the stop marker.
    const ObjectType* best = nullptr;
    bool prefix_without_delimiter = false;
    for (const auto& o : catalog.objects()) {
      if (!obj_rest.starts_with(o.display)) continue;
      const auto after = o.display.size();
      if (after < obj_rest.size() && (obj_rest[after] == ',' || obj_rest[after] == '.')) {
        if (!best || o.display.size() > best->display.size()) best = &o;
      } else if (after == obj_rest.size() || obj_rest[after] == ' ') {
        prefix_without_delimiter = true;
      }
    }
    if (!best) {
      auto e = span_end_from(text, obj_pos);
      auto span = std::string(text.substr(obj_pos, e - obj_pos));
      if (prefix_without_delimiter)
        throw GrammarError(Kind::MalformedSequence,
                           "missing separator or stop marker after '" + span + "'", obj_pos, e);
      throw GrammarError(Kind::UnknownObject, "unknown object '" + span + "'", obj_pos, e);
    }
    out.steps.push_back({action->action, *best});
    pos = obj_pos + best->display.size();

    if (text[pos] == '.') {
      if (pos + 1 != text.size())
        throw GrammarError(Kind::MalformedSequence, "text after stop marker", pos + 1, text.size());
      out.terminated = true;
      return out;
    }
    // text[pos] == ','
    if (pos + 1 >= text.size() || text[pos + 1] != ' ')
      throw GrammarError(Kind::MalformedSequence, "separator must be \", \"", pos,
                         std::min(pos + 2, text.size()));
    pos += kSeparator.size();
  }
}

std::string to_debug_string(const Subgoal& g) {
  return "(" + std::string(action_name(g.action)) + ", " + g.object.id + ")";
}

}  // namespace subplan
