#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subplan/grammar.hpp"
#include "subplan/tokenizer.hpp"

namespace subplan {

/// Token-level automaton over serialized plans.
///
/// The trie holds the token paths of every verbalized (action, object) pair.
/// At a subgoal boundary the separator token returns to the root and the stop
/// token moves to the accepting node, so the automaton recognizes exactly the
/// tokenizations of serialize() images.
class PrefixTrie {
 public:
  using NodeId = std::uint32_t;

  /// Throws GrammarError(TokenizerMismatch) when a verbalization tokenizes to
  /// nothing or collides with the separator/stop tokens.
  static PrefixTrie build(const Catalog& catalog, const Tokenizer& tokenizer,
                          std::span<const ActionType> actions = kAllActions);

  NodeId root() const noexcept { return 0; }
  NodeId accept() const noexcept { return 1; }
  const std::string& separator_token() const noexcept { return separator_; }
  const std::string& stop_token() const noexcept { return stop_; }

  std::optional<NodeId> advance(NodeId node, std::string_view token) const;
  /// Admissible next tokens at a node, sorted ascending.
  std::vector<std::string> continuations(NodeId node) const;
  /// True when the path to this node spells a complete subgoal.
  bool at_boundary(NodeId node) const { return nodes_[node].boundary; }

  /// Walks the prefix from the root; returns an empty set for prefixes the
  /// automaton rejects and after the stop token.
  std::vector<std::string> valid_continuations(std::span<const std::string> prefix) const;
  /// True iff the tokens spell a complete serialized plan.
  bool accepts(std::span<const std::string> tokens) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

  friend bool operator==(const PrefixTrie&, const PrefixTrie&) = default;

 private:
  struct Node {
    std::map<std::string, NodeId, std::less<>> children;
    bool boundary = false;
    friend bool operator==(const Node&, const Node&) = default;
  };

  std::optional<NodeId> walk(std::span<const std::string> tokens) const;

  std::vector<Node> nodes_;
  std::string separator_;
  std::string stop_;
};

}  // namespace subplan
