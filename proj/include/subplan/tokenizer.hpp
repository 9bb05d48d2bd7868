#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace subplan {

using Tokens = std::vector<std::string>;

/// Text <-> token-sequence codec shared by a scorer and the prefix trie.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual Tokens encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const std::string> tokens) const = 0;
};

/// Whitespace word tokenizer that splits ',' and '.' into standalone tokens.
/// decode() attaches punctuation to the preceding word, so it inverts
/// encode() on serialized plans.
class WordTokenizer final : public Tokenizer {
 public:
  Tokens encode(std::string_view text) const override;
  std::string decode(std::span<const std::string> tokens) const override;
};

}  // namespace subplan
