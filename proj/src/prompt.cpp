#include "subplan/prompt.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace subplan {

std::string render_prompt(std::span<const std::pair<std::string, std::string>> examples,
                          std::string_view query) {
  std::string out;
  for (const auto& [source, target] : examples) {
    out += source;
    out += kPromptEquals;
    out += target;
    out += kPromptSeparator;
  }
  out += query;
  out += kPromptEquals;
  return out;
}

std::string build_prompt_forward(std::span<const TrainingPair> pairs, std::string_view query) {
  std::vector<std::pair<std::string, std::string>> ex;
  ex.reserve(pairs.size());
  for (const auto& p : pairs) ex.emplace_back(p.instruction, serialize(p.plan));
  return render_prompt(ex, query);
}

std::string build_prompt_reverse(std::span<const TrainingPair> pairs,
                                 const SubgoalSequence& hypothesis) {
  std::vector<std::pair<std::string, std::string>> ex;
  ex.reserve(pairs.size());
  for (const auto& p : pairs) ex.emplace_back(serialize(p.plan), p.instruction);
  return render_prompt(ex, serialize(hypothesis));
}

std::vector<TrainingPair> parse_training_pairs(std::string_view text, const Catalog& catalog) {
  std::vector<TrainingPair> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw std::runtime_error("training pairs line " + std::to_string(line_no) +
                               ": expected instruction<TAB>plan");
    try {
      out.push_back({std::string(line.substr(0, tab)), parse(line.substr(tab + 1), catalog)});
    } catch (const GrammarError& e) {
      throw GrammarError(e.kind(),
                         "training pairs line " + std::to_string(line_no) + ": " + e.what(),
                         e.span_begin(), e.span_end());
    }
  }
  return out;
}

std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& path,
                                              const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open training pairs '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_training_pairs(ss.str(), catalog);
}

std::string format_training_pairs(std::span<const TrainingPair> pairs) {
  std::string out;
  for (const auto& p : pairs) out += p.instruction + '\t' + serialize(p.plan) + '\n';
  return out;
}

}  // namespace subplan
