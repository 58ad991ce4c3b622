#include <cctype>
#include <fstream>

#include "featnorm/error.hpp"
#include "featnorm/oracle.hpp"

namespace featnorm {

ConceptPlurals ConceptPlurals::load(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> overrides;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto pos = line.find(delimiter);
    if (pos == std::string::npos || pos == 0 || pos + 1 == line.size()) {
      throw ParseError("expected 'concept" + std::string(1, delimiter) + "plural'", line_no);
    }
    overrides[line.substr(0, pos)] = line.substr(pos + 1);
  }
  return ConceptPlurals(std::move(overrides));
}

std::string ConceptPlurals::plural(const std::string& concept_label) const {
  if (const auto it = overrides_.find(concept_label); it != overrides_.end()) return it->second;
  return concept_label + "s";
}

std::string build_prompt(const FeatureQuery& query, const ConceptPlurals& plurals) {
  std::string prompt =
      "Q: Is the property [is_female] true for the concept [book]?\n"
      "A: False\n"
      "Q: Is the property [can_be_digital] true for the concept [book]\n"
      "A: True\n"
      "In one word True/False, answer the following question\n";
  prompt += "Q: Is the property [" + query.feature_label + "] true for " +
            plurals.plural(query.concept_label) + "?\n";
  prompt += "A:";
  return prompt;
}

std::uint8_t parse_answer(std::string_view raw_text) {
  const auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0;
  while (b < raw_text.size() && !is_alpha(raw_text[b])) ++b;
  std::size_t e = b;
  std::string token;
  while (e < raw_text.size() && is_alpha(raw_text[e])) {
    token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw_text[e]))));
    ++e;
  }
  if (token == "true") return 1;
  if (token == "false") return 0;
  throw UnparseableAnswer(std::string(raw_text));
}

}  // namespace featnorm
