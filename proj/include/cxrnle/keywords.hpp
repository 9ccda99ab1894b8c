#pragma once

#include <cxrnle/config.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/text.hpp>

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cxrnle {

constexpr bool is_word_anchored(std::string_view phrase) {
  return phrase.size() > 2 && phrase.front() == '<' && phrase.back() == '>';
}

constexpr std::string_view phrase_text(std::string_view phrase) {
  return is_word_anchored(phrase) ? phrase.substr(1, phrase.size() - 2) : phrase;
}

// Phrase lists driving explanation tagging and the sentence filters. Matching
// is raw lowercase substring search, so stems such as "deteriorat" or "imag"
// cover their continuations, and " position" keeps its leading blank.
// A phrase written as "<ct>" only matches as a whole word.
struct KeywordLexicon {
  std::vector<std::string> explanation;
  std::vector<std::string> exemptions;
  std::vector<std::string> history;
  std::vector<std::string> recommendations;
  std::vector<std::string> technical;
  std::vector<std::string> extra_excluded;

  void validate() const {
    for (const auto* list : {&explanation, &exemptions, &history, &recommendations, &technical, &extra_excluded})
      for (const auto& p : *list) {
        if (p.empty() || p == "<>") throw DataError("empty keyword phrase");
        if (text::to_lower(p) != p) throw DataError("keyword phrase must be lowercase: '" + p + "'");
      }
    for (const auto& ex : exemptions) {
      bool covers = std::any_of(explanation.begin(), explanation.end(), [&](const std::string& e) {
        return phrase_text(ex).find(phrase_text(e)) != std::string_view::npos;
      });
      if (!covers) throw DataError("exemption '" + ex + "' contains no explanation phrase");
    }
  }
};

inline KeywordLexicon default_lexicon() {
  return KeywordLexicon{
      {"indicate", "suggest", "concerning for", "compatible with", "account", "due", "reflect", "relate",
       "potentially", "likely represent", "suspicious for", "worrisome for", "consistent with", "may represent"},
      {"suggestion", "is suggested", "correlate"},
      {"prior", "compare", "change", "deteriorat", "increase", "decrease", "previous", "patient"},
      {"recommend", "perform", "follow"},
      {"<ct>", "technique", " position", "exam", "assess", "view", "imag"},
      {"finding"},
  };
}

// Lists missing from the document keep their default values.
inline KeywordLexicon load_keyword_lexicon(const config::Document& doc) {
  KeywordLexicon lex = default_lexicon();
  auto pick = [&](const char* key, std::vector<std::string>& into) {
    if (auto v = doc.get_in<std::vector<std::string>>("keywords", key)) into = *v;
  };
  pick("explanation", lex.explanation);
  pick("exemptions", lex.exemptions);
  pick("history", lex.history);
  pick("recommendations", lex.recommendations);
  pick("technical", lex.technical);
  pick("extra_excluded", lex.extra_excluded);
  lex.validate();
  return lex;
}

// Offsets of `phrase` in `lowered`, honoring the "<word>" form.
inline std::vector<std::size_t> phrase_offsets(std::string_view lowered, std::string_view phrase) {
  if (!is_word_anchored(phrase)) return text::find_all(lowered, phrase);
  std::string_view word = phrase_text(phrase);
  std::vector<std::size_t> out;
  for (auto pos : text::find_all(lowered, word))
    if (text::at_word_boundaries(lowered, pos, word.size())) out.push_back(pos);
  return out;
}

inline bool contains_phrase(std::string_view lowered, std::string_view phrase) {
  if (!is_word_anchored(phrase)) return lowered.find(phrase) != std::string_view::npos;
  return !phrase_offsets(lowered, phrase).empty();
}

struct KeywordMatch {
  std::string phrase;
  std::size_t offset = 0;
  bool operator==(const KeywordMatch&) const = default;
};

enum class FilterReason { Anonymized, PatientHistory, Recommendation, Technical, FindingWord };

inline constexpr std::array<std::string_view, 5> kFilterReasonNames = {
    "anonymized", "patient_history", "recommendation", "technical", "finding_word"};

constexpr std::string_view filter_reason_name(FilterReason r) {
  return kFilterReasonNames[static_cast<std::size_t>(r)];
}

struct TagResult {
  std::vector<KeywordMatch> explanation_matches;
  std::optional<FilterReason> filter_reason;
};

// `lowered` must already be lowercase. A match is void when it lies entirely
// inside an occurrence of an exemption phrase.
inline std::vector<KeywordMatch> tag_explanation_lowered(std::string_view lowered, const KeywordLexicon& lex) {
  std::vector<std::pair<std::size_t, std::size_t>> exempt;
  for (const auto& ex : lex.exemptions)
    for (auto pos : phrase_offsets(lowered, ex))
      exempt.emplace_back(pos, pos + phrase_text(ex).size());

  struct Hit {
    std::size_t offset, order;
  };
  std::vector<Hit> hits;
  for (std::size_t k = 0; k < lex.explanation.size(); ++k) {
    const auto& phrase = lex.explanation[k];
    for (auto pos : phrase_offsets(lowered, phrase)) {
      std::size_t end = pos + phrase_text(phrase).size();
      bool inside = std::any_of(exempt.begin(), exempt.end(),
                                [&](const auto& sp) { return sp.first <= pos && end <= sp.second; });
      if (!inside) hits.push_back({pos, k});
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return a.offset != b.offset ? a.offset < b.offset : a.order < b.order; });
  std::vector<KeywordMatch> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({lex.explanation[h.order], h.offset});
  return out;
}

inline std::vector<KeywordMatch> tag_explanation(std::string_view sentence, const KeywordLexicon& lex) {
  return tag_explanation_lowered(text::to_lower(sentence), lex);
}

inline std::optional<FilterReason> classify_filter_lowered(std::string_view lowered, const KeywordLexicon& lex) {
  if (lowered.find('_') != std::string_view::npos) return FilterReason::Anonymized;
  auto any = [&](const std::vector<std::string>& list) {
    return std::any_of(list.begin(), list.end(),
                       [&](const std::string& p) { return contains_phrase(lowered, p); });
  };
  if (any(lex.history)) return FilterReason::PatientHistory;
  if (any(lex.recommendations)) return FilterReason::Recommendation;
  if (any(lex.technical)) return FilterReason::Technical;
  if (any(lex.extra_excluded)) return FilterReason::FindingWord;
  return std::nullopt;
}

// Anonymized first, then history > recommendation > technical > "finding".
inline std::optional<FilterReason> classify_filter(std::string_view sentence, const KeywordLexicon& lex) {
  return classify_filter_lowered(text::to_lower(sentence), lex);
}

inline TagResult tag_sentence(std::string_view sentence, const KeywordLexicon& lex) {
  std::string lowered = text::to_lower(sentence);
  return {tag_explanation_lowered(lowered, lex), classify_filter_lowered(lowered, lex)};
}

// Distinct matched phrases in order of first occurrence.
inline std::vector<std::string> distinct_phrases(const std::vector<KeywordMatch>& matches) {
  std::vector<std::string> out;
  for (const auto& m : matches)
    if (std::find(out.begin(), out.end(), m.phrase) == out.end()) out.push_back(m.phrase);
  return out;
}

} // namespace cxrnle
