#pragma once

#include <cxrnle/config.hpp>
#include <cxrnle/csv.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/segmenter.hpp>
#include <cxrnle/text.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace cxrnle {

// Deterministic stand-in for a neural mention labeler. Phrases are matched on
// word boundaries; a phrase written "a ... b" matches `a` followed later in
// the same clause by `b`.
struct MentionLexicon {
  std::array<std::vector<std::string>, kNumSubstantiveLabels> phrases;
  std::vector<std::string> no_finding;
  std::vector<std::string> negation;
  std::vector<std::string> uncertainty;
  std::vector<std::string> coordination;

  const std::vector<std::string>& phrases_for(Label l) const { return phrases[index_of(l)]; }

  void validate() const {
    std::map<std::string, std::string> owner;
    auto check = [&](const std::vector<std::string>& list, std::string_view who, bool exclusive) {
      for (const auto& p : list) {
        if (text::trim(p).empty()) throw DataError("empty phrase in mention lexicon (" + std::string(who) + ")");
        if (text::to_lower(p) != p) throw DataError("mention phrase must be lowercase: '" + p + "'");
        if (!exclusive) continue;
        auto [it, inserted] = owner.emplace(p, std::string(who));
        if (!inserted && it->second != who)
          throw DataError("phrase '" + p + "' assigned to both " + it->second + " and " + std::string(who));
      }
    };
    for (std::size_t i = 0; i < kNumSubstantiveLabels; ++i) check(phrases[i], kLabelNames[i], true);
    check(no_finding, "No Finding", true);
    check(negation, "negation", false);
    check(uncertainty, "uncertainty", false);
    check(coordination, "coordination", false);
  }
};

inline MentionLexicon default_mention_lexicon() {
  MentionLexicon lex;
  auto set = [&](Label l, std::vector<std::string> p) { lex.phrases[index_of(l)] = std::move(p); };
  set(Label::EnlargedCardiomediastinum,
      {"enlarged cardiomediastinum", "enlarged cardiomediastinal silhouette", "cardiomediastinal silhouette ... enlarged",
       "cardiomediastinal enlargement", "widened mediastinum", "mediastinal widening", "widening of the mediastinum",
       "mediastinal enlargement"});
  set(Label::Cardiomegaly,
      {"cardiomegaly", "enlarged heart", "heart is enlarged", "heart size is enlarged", "enlarged cardiac silhouette",
       "cardiac enlargement"});
  set(Label::LungOpacity,
      {"opacity", "opacities", "opacification", "opacifications", "density", "densities", "infiltrate", "infiltrates",
       "infiltration"});
  set(Label::LungLesion, {"nodule", "nodules", "nodular", "mass", "masses", "lesion", "lesions"});
  set(Label::Edema, {"edema", "vascular congestion", "fluid overload"});
  set(Label::Consolidation, {"consolidation", "consolidations", "consolidative", "consolidated"});
  set(Label::Pneumonia, {"pneumonia", "pneumonias", "infection", "infectious", "infectious process"});
  set(Label::Atelectasis, {"atelectasis", "atelectatic", "collapse", "collapsed"});
  set(Label::Pneumothorax, {"pneumothorax", "pneumothoraces"});
  set(Label::PleuralEffusion, {"effusion", "effusions", "pleural fluid"});
  set(Label::PleuralOther,
      {"pleural thickening", "pleural scarring", "pleural plaque", "pleural plaques", "fibrothorax", "apical cap"});
  set(Label::Fracture, {"fracture", "fractures", "fractured"});
  set(Label::SupportDevices,
      {"tube", "tubes", "catheter", "catheters", "picc", "pacemaker", "pacer", "sternotomy wires", "drain", "stent"});
  lex.no_finding = {"lungs are clear", "lungs are well expanded and clear", "clear lungs",
                    "no acute cardiopulmonary process", "no acute cardiopulmonary abnormality",
                    "no acute intrathoracic process"};
  lex.negation = {"no", "without", "free of", "clear of", "resolved", "negative for", "rather than"};
  lex.uncertainty = {"may",        "might",     "possible",   "possibly",  "question", "cannot exclude",
                     "cannot be excluded", "likely", "suspected", "suspicious", "concerning", "borderline",
                     "versus",     "vs"};
  lex.coordination = {"or", "and/or", "versus", "vs"};
  return lex;
}

// Config key for a label, e.g. "pleural_effusion".
inline std::string label_key(Label l) {
  std::string k = text::to_lower(label_name(l));
  std::replace(k.begin(), k.end(), ' ', '_');
  return k;
}

inline MentionLexicon load_mention_lexicon(const config::Document& doc) {
  MentionLexicon lex = default_mention_lexicon();
  auto pick = [&](const std::string& key, std::vector<std::string>& into) {
    if (auto v = doc.get_in<std::vector<std::string>>("mention", key)) into = *v;
  };
  for (std::size_t i = 0; i < kNumSubstantiveLabels; ++i) pick(label_key(static_cast<Label>(i)), lex.phrases[i]);
  pick("no_finding", lex.no_finding);
  pick("negation", lex.negation);
  pick("uncertainty", lex.uncertainty);
  pick("coordination", lex.coordination);
  lex.validate();
  return lex;
}

namespace detail {

struct Hit {
  std::size_t begin, end;
};

inline void find_words(std::string_view s, std::string_view phrase, std::vector<Hit>& out) {
  for (auto pos : text::find_all(s, phrase))
    if (text::at_word_boundaries(s, pos, phrase.size())) out.push_back({pos, pos + phrase.size()});
}

// Clause boundaries: ',', ';' and the words "but" / "however".
inline std::vector<std::size_t> clause_breaks(std::string_view s) {
  std::vector<std::size_t> breaks;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == ',' || s[i] == ';') breaks.push_back(i);
  std::vector<Hit> words;
  find_words(s, "but", words);
  find_words(s, "however", words);
  for (const auto& w : words) breaks.push_back(w.begin);
  std::sort(breaks.begin(), breaks.end());
  return breaks;
}

inline std::size_t clause_of(const std::vector<std::size_t>& breaks, std::size_t pos) {
  return static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), pos) - breaks.begin());
}

struct Mention {
  Label label;
  std::size_t begin, end, clause;
};

struct Cue {
  std::size_t begin, end, clause;
};

inline std::vector<Cue> find_cues(std::string_view s, const std::vector<std::string>& cues,
                                  const std::vector<std::size_t>& breaks) {
  std::vector<Hit> hits;
  for (const auto& c : cues) find_words(s, c, hits);
  std::vector<Cue> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.begin, h.end, clause_of(breaks, h.begin)});
  return out;
}

// A cue scopes over the later mentions of its clause. When no mention follows
// it in the clause ("effusion has resolved") it scopes back over the earlier ones.
inline bool cue_applies(const Cue& c, const Mention& m, const std::vector<Mention>& mentions) {
  if (c.clause != m.clause) return false;
  if (c.end <= m.begin) return true;
  if (c.begin < m.end) return false;
  return std::none_of(mentions.begin(), mentions.end(),
                      [&](const Mention& o) { return o.clause == c.clause && o.begin >= c.end; });
}

} // namespace detail

inline LabelState label_sentence(std::string_view sentence, const MentionLexicon& lex) {
  const std::string s = text::to_lower(sentence);
  const auto breaks = detail::clause_breaks(s);

  std::vector<detail::Mention> mentions;
  std::vector<detail::Hit> hits;
  for (std::size_t li = 0; li < kNumSubstantiveLabels; ++li) {
    for (const auto& phrase : lex.phrases[li]) {
      hits.clear();
      auto gap = phrase.find(" ... ");
      if (gap == std::string::npos) {
        detail::find_words(s, phrase, hits);
      } else {
        std::string_view head = std::string_view(phrase).substr(0, gap);
        std::string_view tail = std::string_view(phrase).substr(gap + 5);
        std::vector<detail::Hit> heads, tails;
        detail::find_words(s, head, heads);
        detail::find_words(s, tail, tails);
        for (const auto& h : heads)
          for (const auto& t : tails)
            if (t.begin >= h.end && detail::clause_of(breaks, h.begin) == detail::clause_of(breaks, t.begin)) {
              hits.push_back({h.begin, t.end});
              break;
            }
      }
      for (const auto& h : hits)
        mentions.push_back({static_cast<Label>(li), h.begin, h.end, detail::clause_of(breaks, h.begin)});
    }
  }

  const auto negations = detail::find_cues(s, lex.negation, breaks);
  const auto uncertainties = detail::find_cues(s, lex.uncertainty, breaks);

  auto coordinated = [&](const detail::Mention& m) {
    for (const auto& o : mentions) {
      if (o.label == m.label || o.clause != m.clause) continue;
      const auto& first = o.begin < m.begin ? o : m;
      const auto& second = o.begin < m.begin ? m : o;
      if (second.begin < first.end) continue;
      // Only neighbouring mentions coordinate.
      bool interposed = std::any_of(mentions.begin(), mentions.end(), [&](const detail::Mention& x) {
        return x.begin >= first.end && x.end <= second.begin;
      });
      if (interposed) continue;
      std::string_view between = std::string_view(s).substr(first.end, second.begin - first.end);
      for (const auto& conj : lex.coordination) {
        std::vector<detail::Hit> found;
        detail::find_words(between, conj, found);
        if (!found.empty()) return true;
      }
    }
    return false;
  };

  LabelState state;
  for (const auto& m : mentions) {
    auto applies = [&](const detail::Cue& c) { return detail::cue_applies(c, m, mentions); };
    Certainty c = Certainty::Positive;
    if (std::any_of(negations.begin(), negations.end(), applies))
      c = Certainty::Negative;
    else if (std::any_of(uncertainties.begin(), uncertainties.end(), applies) || coordinated(m))
      c = Certainty::Uncertain;
    // Positive outranks Uncertain outranks Negative across mentions of one label.
    if (static_cast<int>(c) > static_cast<int>(state[m.label])) state.set(m.label, c);
  }

  if ((state.present_set() & kSubstantiveLabels).empty()) {
    for (const auto& p : lex.no_finding) {
      hits.clear();
      detail::find_words(s, p, hits);
      if (!hits.empty()) {
        state.set(Label::NoFinding, Certainty::Positive);
        break;
      }
    }
  }
  return state;
}

// ---------------------------------------------------------------------------
// Labeler interface

class Labeler {
public:
  virtual ~Labeler() = default;
  virtual LabelState label(const Sentence& sentence) const = 0;
  // Sentences the labeler had no entry for (external labelers only).
  virtual std::size_t missing_count() const { return 0; }
};

class BuiltinLabeler final : public Labeler {
public:
  explicit BuiltinLabeler(MentionLexicon lex = default_mention_lexicon()) : lex_(std::move(lex)) { lex_.validate(); }
  LabelState label(const Sentence& sentence) const override { return label_sentence(sentence.text, lex_); }
  const MentionLexicon& lexicon() const { return lex_; }

private:
  MentionLexicon lex_;
};

// CSV cell encoding: blank / 0 / -1 / 1.
inline std::string_view encode_certainty(Certainty c) {
  switch (c) {
    case Certainty::Negative: return "0";
    case Certainty::Uncertain: return "-1";
    case Certainty::Positive: return "1";
    case Certainty::Absent: break;
  }
  return "";
}

inline std::optional<Certainty> decode_certainty(std::string_view cell) {
  cell = text::trim(cell);
  if (cell.empty()) return Certainty::Absent;
  if (cell == "0") return Certainty::Negative;
  if (cell == "-1") return Certainty::Uncertain;
  if (cell == "1") return Certainty::Positive;
  return std::nullopt;
}

struct SentenceKey {
  std::string study_id;
  Section section;
  std::size_t sentence_index;
  auto operator<=>(const SentenceKey&) const = default;
};

namespace detail {

struct LabelColumns {
  std::vector<std::pair<std::size_t, Label>> columns;
};

inline LabelColumns label_columns(const csv::Table& t, const std::string& source, std::size_t skip) {
  LabelColumns lc;
  for (std::size_t i = skip; i < t.header().size(); ++i) {
    if (t.header()[i] == "text") continue; // sentence text travels along for convenience
    auto l = parse_label(t.header()[i]);
    if (!l) throw DataError(source + ": unknown label column '" + t.header()[i] + "'");
    lc.columns.emplace_back(i, *l);
  }
  return lc;
}

inline LabelState decode_row(const csv::Row& row, const LabelColumns& lc, const std::string& source,
                             std::size_t line) {
  LabelState st;
  for (auto [col, label] : lc.columns) {
    auto c = decode_certainty(row[col]);
    if (!c)
      throw DataError(source + ": invalid value '" + row[col] + "' for " + std::string(label_name(label)) +
                      " in row " + std::to_string(line));
    st.set(label, *c);
  }
  return st;
}

} // namespace detail

// Columns: study_id, section, sentence_index, then label-name columns. A "text" column is ignored.
inline std::map<SentenceKey, LabelState> load_external_labels(std::istream& in, const std::string& source) {
  std::map<SentenceKey, LabelState> out;
  auto t = csv::Table::read(in, source);
  if (t.header().empty()) return out;
  if (t.header().size() < 3 || t.header()[0] != "study_id" || t.header()[1] != "section" ||
      t.header()[2] != "sentence_index")
    throw DataError(source + ": expected leading columns study_id, section, sentence_index");
  auto lc = detail::label_columns(t, source, 3);
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    const auto& row = t.rows()[r];
    std::size_t line = t.line_of(r);
    auto section = parse_section(text::trim(row[1]));
    if (!section) throw DataError(source + ": invalid section '" + row[1] + "' in row " + std::to_string(line));
    std::size_t idx = 0;
    std::string_view raw_idx = text::trim(row[2]);
    if (raw_idx.empty() || !std::all_of(raw_idx.begin(), raw_idx.end(), text::is_digit))
      throw DataError(source + ": invalid sentence_index '" + row[2] + "' in row " + std::to_string(line));
    idx = std::stoull(std::string(raw_idx));
    SentenceKey key{std::string(text::trim(row[0])), *section, idx};
    if (out.count(key))
      throw DataError(source + ": duplicate key (" + key.study_id + ", " + row[1] + ", " + row[2] + ") in row " +
                      std::to_string(line));
    out.emplace(std::move(key), detail::decode_row(row, lc, source, line));
  }
  return out;
}

inline std::map<SentenceKey, LabelState> load_external_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open labels file " + path);
  return load_external_labels(in, path);
}

class ExternalLabeler final : public Labeler {
public:
  explicit ExternalLabeler(std::map<SentenceKey, LabelState> labels) : labels_(std::move(labels)) {}

  LabelState label(const Sentence& s) const override {
    auto it = labels_.find(SentenceKey{s.study_id, s.section, s.index});
    if (it == labels_.end()) {
      missing_.fetch_add(1, std::memory_order_relaxed);
      return {};
    }
    return it->second;
  }
  std::size_t missing_count() const override { return missing_.load(); }

private:
  std::map<SentenceKey, LabelState> labels_;
  mutable std::atomic<std::size_t> missing_{0};
};

// Text-keyed labels, e.g. the output of an external labeler run over NLE
// strings. The key column is "text" (or "Report Impression").
class TextLabeler final : public Labeler {
public:
  static TextLabeler load(std::istream& in, const std::string& source) {
    TextLabeler tl;
    auto t = csv::Table::read(in, source);
    if (t.header().empty()) return tl;
    if (t.header()[0] != "text" && t.header()[0] != "Report Impression")
      throw DataError(source + ": first column must be 'text'");
    auto lc = detail::label_columns(t, source, 1);
    for (std::size_t r = 0; r < t.rows().size(); ++r) {
      const auto& row = t.rows()[r];
      auto st = detail::decode_row(row, lc, source, t.line_of(r));
      auto key = text::normalize_space(row[0]);
      auto [it, inserted] = tl.labels_.emplace(key, st);
      if (!inserted && !(it->second == st))
        throw DataError(source + ": conflicting labels for duplicate text in row " + std::to_string(t.line_of(r)));
    }
    return tl;
  }
  static TextLabeler load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open labels file " + path);
    return load(in, path);
  }

  TextLabeler() = default;
  TextLabeler(TextLabeler&& o) noexcept : labels_(std::move(o.labels_)) {}

  LabelState label(const Sentence& s) const override {
    auto it = labels_.find(text::normalize_space(s.text));
    if (it == labels_.end()) {
      missing_.fetch_add(1, std::memory_order_relaxed);
      return {};
    }
    return it->second;
  }
  std::size_t missing_count() const override { return missing_.load(); }

private:
  std::map<std::string, LabelState> labels_;
  mutable std::atomic<std::size_t> missing_{0};
};

inline csv::Row label_header(std::vector<std::string> leading) {
  for (auto n : kLabelNames) leading.emplace_back(n);
  return leading;
}

inline void append_label_cells(csv::Row& row, const LabelState& st) {
  for (Label l : kAllLabels) row.emplace_back(encode_certainty(st[l]));
}

} // namespace cxrnle
