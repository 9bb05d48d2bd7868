#include "subplan/prefix_trie.hpp"

#include <algorithm>

namespace subplan {

namespace {

std::string single_token(const Tokenizer& tokenizer, std::string_view text) {
  auto toks = tokenizer.encode(text);
  if (toks.size() != 1)
    throw GrammarError(GrammarError::Kind::TokenizerMismatch,
                       "tokenizer must encode '" + std::string(text) + "' as a single token");
  return toks.front();
}

}  // namespace

PrefixTrie PrefixTrie::build(const Catalog& catalog, const Tokenizer& tokenizer,
                             std::span<const ActionType> actions) {
  PrefixTrie trie;
  trie.separator_ = single_token(tokenizer, ",");
  trie.stop_ = single_token(tokenizer, std::string(kStopMarker));
  trie.nodes_.resize(2);  // root, accept

  for (ActionType action : actions) {
    for (const auto& object : catalog.objects()) {
      const auto text = verbalize({action, object});
      const auto tokens = tokenizer.encode(text);
      if (tokens.empty())
        throw GrammarError(GrammarError::Kind::TokenizerMismatch,
                           "verbalization '" + text + "' tokenizes to an empty sequence");
      NodeId cur = 0;
      for (const auto& tok : tokens) {
        if (tok == trie.separator_ || tok == trie.stop_)
          throw GrammarError(GrammarError::Kind::TokenizerMismatch,
                             "verbalization '" + text + "' contains a separator token");
        auto it = trie.nodes_[cur].children.find(tok);
        if (it == trie.nodes_[cur].children.end()) {
          const auto next = static_cast<NodeId>(trie.nodes_.size());
          trie.nodes_[cur].children.emplace(tok, next);
          trie.nodes_.emplace_back();
          cur = next;
        } else {
          cur = it->second;
        }
      }
      trie.nodes_[cur].boundary = true;
    }
  }
  return trie;
}

std::optional<PrefixTrie::NodeId> PrefixTrie::advance(NodeId node, std::string_view token) const {
  if (node == accept()) return std::nullopt;
  const auto& n = nodes_[node];
  if (n.boundary) {
    if (token == separator_) return root();
    if (token == stop_) return accept();
  }
  auto it = n.children.find(token);
  if (it == n.children.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> PrefixTrie::continuations(NodeId node) const {
  std::vector<std::string> out;
  if (node == accept()) return out;
  const auto& n = nodes_[node];
  out.reserve(n.children.size() + 2);
  for (const auto& [tok, _] : n.children) out.push_back(tok);
  if (n.boundary) {
    out.push_back(separator_);
    out.push_back(stop_);
    std::sort(out.begin(), out.end());
  }
  return out;
}

std::optional<PrefixTrie::NodeId> PrefixTrie::walk(std::span<const std::string> tokens) const {
  NodeId cur = root();
  for (const auto& t : tokens) {
    auto next = advance(cur, t);
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

std::vector<std::string> PrefixTrie::valid_continuations(
    std::span<const std::string> prefix) const {
  auto node = walk(prefix);
  if (!node) return {};
  return continuations(*node);
}

bool PrefixTrie::accepts(std::span<const std::string> tokens) const {
  auto node = walk(tokens);
  return node && *node == accept();
}

}  // namespace subplan
