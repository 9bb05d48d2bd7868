#pragma once

// Subgoal alphabet, the text verbalizer and its inverse.
//
// A plan is rendered as "v(g1), v(g2), ..., v(gn)." where v(g) is an action
// phrase followed by the object's display name. parse() inverts serialize()
// exactly on its image.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace subplan {

enum class ActionType : std::uint8_t { Pickup, Put, Heat, Cool, Clean, Slice, ToggleOn };

inline constexpr std::array<ActionType, 7> kAllActions = {
    ActionType::Pickup, ActionType::Put,   ActionType::Heat,    ActionType::Cool,
    ActionType::Clean,  ActionType::Slice, ActionType::ToggleOn,
};

/// Canonical enum name, e.g. "ToggleOn".
std::string_view action_name(ActionType action);
/// Verbalized action phrase, e.g. "turn on".
std::string_view action_phrase(ActionType action);
std::optional<ActionType> action_from_name(std::string_view name);

struct ObjectType {
  std::string id;       // lowercase key, no spaces ("desklamp")
  std::string display;  // verbalization ("desk lamp")

  friend bool operator==(const ObjectType&, const ObjectType&) = default;
  friend auto operator<=>(const ObjectType&, const ObjectType&) = default;
};

class GrammarError : public std::runtime_error {
 public:
  enum class Kind {
    EmptyPlan,
    UnknownAction,
    UnknownObject,
    MalformedSequence,
    TokenizerMismatch,
    InvalidCatalog,
  };

  GrammarError(Kind kind, std::string message, std::size_t span_begin = 0,
               std::size_t span_end = 0);

  Kind kind() const noexcept { return kind_; }
  /// Byte range of the offending input, when the error came from parsing.
  std::size_t span_begin() const noexcept { return span_begin_; }
  std::size_t span_end() const noexcept { return span_end_; }

 private:
  Kind kind_;
  std::size_t span_begin_;
  std::size_t span_end_;
};

/// The object vocabulary. Immutable once constructed.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<ObjectType> objects);

  /// Reads "id<TAB>display" records; '#' starts a comment line.
  static Catalog parse(std::string_view text);
  static Catalog load(const std::filesystem::path& path);
  std::string to_text() const;

  const std::vector<ObjectType>& objects() const noexcept { return objects_; }
  std::size_t size() const noexcept { return objects_.size(); }
  bool empty() const noexcept { return objects_.empty(); }
  const ObjectType& operator[](std::size_t i) const { return objects_[i]; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_of(id).has_value(); }
  /// Throws GrammarError(UnknownObject) when absent.
  const ObjectType& at(std::string_view id) const;

  /// Catalog restricted to the given ids, in the given order.
  Catalog subset(std::span<const std::string> ids) const;

 private:
  std::vector<ObjectType> objects_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct Subgoal {
  ActionType action;
  ObjectType object;

  friend bool operator==(const Subgoal&, const Subgoal&) = default;
  friend auto operator<=>(const Subgoal&, const Subgoal&) = default;
};

struct SubgoalSequence {
  std::vector<Subgoal> steps;
  bool terminated = true;

  std::size_t size() const noexcept { return steps.size(); }
  bool empty() const noexcept { return steps.empty(); }

  friend bool operator==(const SubgoalSequence&, const SubgoalSequence&) = default;
};

/// A plan position: either a real subgoal or the stop marker (nullopt).
using PlanStep = std::optional<Subgoal>;

/// The i-th step of a plan; positions at or past the end are the stop marker.
PlanStep step_at(const SubgoalSequence& plan, std::size_t i);
inline bool is_stop(const PlanStep& step) { return !step.has_value(); }

inline constexpr std::string_view kSeparator = ", ";
inline constexpr std::string_view kStopMarker = ".";

std::string verbalize(const Subgoal& g);
/// Throws GrammarError(EmptyPlan) on an empty sequence.
std::string serialize(const SubgoalSequence& plan);
SubgoalSequence parse(std::string_view text, const Catalog& catalog);

/// Human-readable "(Pickup, apple)" form used in reports.
std::string to_debug_string(const Subgoal& g);

}  // namespace subplan
