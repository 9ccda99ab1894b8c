#pragma once

#include <cxrnle/corpus.hpp>
#include <cxrnle/text.hpp>

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace cxrnle {

enum class Section { Findings, Impression };

constexpr std::string_view section_name(Section s) {
  return s == Section::Findings ? "findings" : "impression";
}

inline std::optional<Section> parse_section(std::string_view s) {
  if (s == "findings") return Section::Findings;
  if (s == "impression") return Section::Impression;
  return std::nullopt;
}

struct Sentence {
  std::string study_id;
  Section section = Section::Findings;
  std::size_t index = 0; // 0-based within the report, findings first
  std::string text;      // whitespace-normalized, original casing
  std::vector<std::string> tokens;
};

namespace detail {

inline constexpr std::array<std::string_view, 5> kAbbreviations = {"dr", "mr", "e.g", "i.e", "vs"};

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Decides whether the single '.' at `dot` ends an abbreviation rather than a sentence.
inline bool is_abbreviation_dot(std::string_view s, std::size_t dot, std::size_t after) {
  std::size_t b = dot;
  while (b > 0 && !text::is_space(s[b - 1])) --b;
  std::string_view word = s.substr(b, dot - b);
  while (!word.empty() && (word.front() == '(' || word.front() == '[' || word.front() == '"'))
    word.remove_prefix(1);
  std::string w = text::to_lower(word);
  for (auto a : kAbbreviations)
    if (w == a) return true;
  if (w.size() == 1 && text::is_alpha(w[0])) return true;
  if (w == "no") {
    std::size_t k = after;
    while (k < s.size() && text::is_space(s[k])) ++k;
    if (k < s.size() && text::is_digit(s[k])) return true;
  }
  return false;
}

} // namespace detail

// Splits at '.', '!' or '?' followed by whitespace or end of text, except after
// a known abbreviation, a single-letter initial, or "No." before a number.
// Periods inside numbers are never followed by whitespace, so "2.3" stays whole.
inline std::vector<std::string> split_sentences(std::string_view section_text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = section_text.size();
  auto emit = [&](std::size_t end) {
    std::string s = text::normalize_space(section_text.substr(start, end - start));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!detail::is_terminator(section_text[i])) continue;
    std::size_t j = i;
    while (j < n && detail::is_terminator(section_text[j])) ++j;
    if (j < n && !text::is_space(section_text[j])) {
      i = j - 1;
      continue;
    }
    bool single_dot = (j - i == 1) && section_text[i] == '.';
    if (!(single_dot && detail::is_abbreviation_dot(section_text, i, j))) emit(j);
    i = j - 1;
  }
  if (start < n) emit(n);
  return out;
}

// Lowercases, splits on whitespace and peels leading/trailing punctuation off
// each chunk into one-character tokens. Inner punctuation (hyphens, decimal
// points) stays attached.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    while (i < n && text::is_space(s[i])) ++i;
    std::size_t b = i;
    while (i < n && !text::is_space(s[i])) ++i;
    if (b == i) break;
    std::size_t e = i;
    std::size_t core_b = b, core_e = e;
    while (core_b < core_e && text::is_punct(s[core_b])) ++core_b;
    while (core_e > core_b && text::is_punct(s[core_e - 1])) --core_e;
    for (std::size_t k = b; k < core_b; ++k) out.emplace_back(1, s[k]);
    if (core_b < core_e) out.push_back(text::to_lower(s.substr(core_b, core_e - core_b)));
    for (std::size_t k = core_e; k < e; ++k) out.emplace_back(1, s[k]);
  }
  return out;
}

// Sentences of a report: findings first, then impression, numbered 0.. per report.
inline std::vector<Sentence> segment_report(const Report& report, bool with_tokens = true) {
  std::vector<Sentence> out;
  auto add = [&](const std::optional<std::string>& body, Section section) {
    if (!body) return;
    for (auto& t : split_sentences(*body)) {
      Sentence s;
      s.study_id = report.meta.study_id;
      s.section = section;
      s.index = out.size();
      s.text = std::move(t);
      if (with_tokens) s.tokens = tokenize(s.text);
      out.push_back(std::move(s));
    }
  };
  add(report.findings, Section::Findings);
  add(report.impression, Section::Impression);
  return out;
}

} // namespace cxrnle
