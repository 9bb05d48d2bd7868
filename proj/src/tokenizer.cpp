#include "subplan/tokenizer.hpp"

namespace subplan {

namespace {
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_punct(char c) { return c == ',' || c == '.'; }
}  // namespace

Tokens WordTokenizer::encode(std::string_view text) const {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

std::string WordTokenizer::decode(std::span<const std::string> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool punct = t.size() == 1 && is_punct(t[0]);
    if (i && !punct) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace subplan
