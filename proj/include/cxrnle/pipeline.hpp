#pragma once

#include <cxrnle/corpus.hpp>
#include <cxrnle/keywords.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/mention.hpp>
#include <cxrnle/parallel.hpp>
#include <cxrnle/rules.hpp>
#include <cxrnle/segmenter.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace cxrnle {

// A rule-matched sentence before expansion to images.
struct SentenceNle {
  std::string subject_id;
  std::string study_id;
  Section section = Section::Findings;
  std::size_t sentence_index = 0;
  std::string text;
  RuleMatch match;
  std::vector<std::string> keywords;
  Split split = Split::Unassigned;
};

// One image-NLE pair.
struct NleRecord {
  std::string subject_id;
  std::string study_id;
  std::string image_id;
  ViewPosition view_position = ViewPosition::AP;
  Section section = Section::Findings;
  std::size_t sentence_index = 0;
  std::string nle_text;
  std::vector<LabelCertainty> diagnosis;
  std::vector<Label> evidence; // empty means other_misc
  int rule_id = 0;
  std::vector<std::string> keywords;
  Split split = Split::Unassigned;

  bool operator==(const NleRecord&) const = default;
};

struct FunnelStats {
  std::size_t sentences_total = 0;
  std::size_t after_anonymized_filter = 0;
  std::size_t after_nondescriptive_filter = 0;
  std::size_t rule_matched = 0;
  std::size_t after_dedup = 0;
  std::size_t after_frontal_restriction = 0;

  std::array<std::size_t, 6> stages() const {
    return {sentences_total, after_anonymized_filter, after_nondescriptive_filter,
            rule_matched,    after_dedup,             after_frontal_restriction};
  }
  bool monotone() const {
    auto s = stages();
    return std::is_sorted(s.rbegin(), s.rend());
  }
  bool operator==(const FunnelStats&) const = default;
};

struct PipelineOptions {
  KeywordLexicon keywords = default_lexicon();
  const Labeler* labeler = nullptr; // required
  const std::vector<RulePattern>* rules = &builtin_rules();
  unsigned jobs = 1;
  bool dedup_ignore_certainty = false;
};

struct PipelineResult {
  std::vector<NleRecord> records; // (subject, study, section, sentence_index, image) order
  FunnelStats funnel;
  std::size_t reports_total = 0;
  std::size_t reports_skipped = 0;
  std::array<std::size_t, 5> filtered{}; // indexed by FilterReason
  std::vector<std::size_t> keyword_sentences; // per explanation phrase, over all sentences
  std::vector<std::string> keyword_phrases;
  std::size_t unlabeled_sentences = 0;
};

// ---------------------------------------------------------------------------
// Stages

// Keeps the first sentence (findings before impression, then index) for each
// distinct (diagnosis, evidence) label key. `records` must belong to one study.
inline std::vector<SentenceNle> dedup(std::vector<SentenceNle> records, bool ignore_certainty = false) {
  std::stable_sort(records.begin(), records.end(), [](const SentenceNle& a, const SentenceNle& b) {
    return std::tie(a.section, a.sentence_index) < std::tie(b.section, b.sentence_index);
  });
  using Key = std::pair<std::vector<LabelCertainty>, std::vector<Label>>;
  std::vector<Key> seen;
  std::vector<SentenceNle> out;
  for (auto& r : records) {
    Key key{r.match.diagnosis, r.match.evidence};
    if (ignore_certainty)
      for (auto& d : key.first) d.certainty = Certainty::Absent;
    std::sort(key.first.begin(), key.first.end());
    std::sort(key.second.begin(), key.second.end());
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(std::move(key));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::size_t frontal_count(const std::vector<ImageMeta>& images) {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const ImageMeta& i) { return is_frontal(i.view_position); }));
}

// One record per (sentence, AP/PA image); other views contribute nothing.
inline std::vector<NleRecord> expand_per_image(const std::vector<SentenceNle>& sentences,
                                               const std::vector<ImageMeta>& images) {
  std::vector<const ImageMeta*> frontal;
  for (const auto& im : images)
    if (is_frontal(im.view_position)) frontal.push_back(&im);
  std::sort(frontal.begin(), frontal.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });
  std::vector<NleRecord> out;
  out.reserve(sentences.size() * frontal.size());
  for (const auto& s : sentences)
    for (const auto* im : frontal) {
      NleRecord r;
      r.subject_id = s.subject_id;
      r.study_id = s.study_id;
      r.image_id = im->image_id;
      r.view_position = im->view_position;
      r.section = s.section;
      r.sentence_index = s.sentence_index;
      r.nle_text = s.text;
      r.diagnosis = s.match.diagnosis;
      r.evidence = s.match.evidence;
      r.rule_id = s.match.rule_id;
      r.keywords = s.keywords;
      r.split = s.split;
      out.push_back(std::move(r));
    }
  return out;
}

namespace detail {

struct ReportOutcome {
  FunnelStats funnel;
  std::array<std::size_t, 5> filtered{};
  std::vector<std::size_t> keyword_sentences;
  std::vector<NleRecord> records;
};

inline ReportOutcome process_report(const Report& report, const PipelineOptions& opt) {
  ReportOutcome out;
  out.keyword_sentences.assign(opt.keywords.explanation.size(), 0);
  if (report.skipped()) return out;

  std::vector<SentenceNle> matched;
  for (auto& s : segment_report(report, /*with_tokens=*/false)) {
    ++out.funnel.sentences_total;
    std::string lowered = text::to_lower(s.text);
    auto matches = tag_explanation_lowered(lowered, opt.keywords);
    for (std::size_t k = 0; k < opt.keywords.explanation.size(); ++k)
      if (std::any_of(matches.begin(), matches.end(),
                      [&](const KeywordMatch& m) { return m.phrase == opt.keywords.explanation[k]; }))
        ++out.keyword_sentences[k];

    auto reason = classify_filter_lowered(lowered, opt.keywords);
    if (reason) ++out.filtered[static_cast<std::size_t>(*reason)];
    if (reason == FilterReason::Anonymized) continue;
    ++out.funnel.after_anonymized_filter;
    if (reason) continue;
    ++out.funnel.after_nondescriptive_filter;

    LabelState state = opt.labeler->label(s);
    auto m = match_rule(state, !matches.empty(), *opt.rules);
    if (!m) continue;
    ++out.funnel.rule_matched;
    SentenceNle nle;
    nle.subject_id = report.meta.subject_id;
    nle.study_id = report.meta.study_id;
    nle.section = s.section;
    nle.sentence_index = s.index;
    nle.text = std::move(s.text);
    nle.match = std::move(*m);
    nle.keywords = distinct_phrases(matches);
    nle.split = report.meta.split;
    matched.push_back(std::move(nle));
  }

  auto kept = dedup(std::move(matched), opt.dedup_ignore_certainty);
  out.funnel.after_dedup = kept.size();
  if (frontal_count(report.meta.images) > 0) out.funnel.after_frontal_restriction = kept.size();
  out.records = expand_per_image(kept, report.meta.images);
  return out;
}

} // namespace detail

inline PipelineResult run_pipeline(const Corpus& corpus, const PipelineOptions& opt) {
  if (!opt.labeler) throw std::invalid_argument("run_pipeline: labeler is required");
  opt.keywords.validate();
  PipelineResult res;
  res.keyword_phrases = opt.keywords.explanation;
  res.keyword_sentences.assign(opt.keywords.explanation.size(), 0);
  res.reports_total = corpus.reports.size();

  std::vector<detail::ReportOutcome> outcomes(corpus.reports.size());
  parallel_for(corpus.reports.size(), opt.jobs,
               [&](std::size_t i) { outcomes[i] = detail::process_report(corpus.reports[i], opt); });

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (corpus.reports[i].skipped()) ++res.reports_skipped;
    auto& f = res.funnel;
    f.sentences_total += o.funnel.sentences_total;
    f.after_anonymized_filter += o.funnel.after_anonymized_filter;
    f.after_nondescriptive_filter += o.funnel.after_nondescriptive_filter;
    f.rule_matched += o.funnel.rule_matched;
    f.after_dedup += o.funnel.after_dedup;
    f.after_frontal_restriction += o.funnel.after_frontal_restriction;
    for (std::size_t k = 0; k < res.filtered.size(); ++k) res.filtered[k] += o.filtered[k];
    for (std::size_t k = 0; k < res.keyword_sentences.size(); ++k) res.keyword_sentences[k] += o.keyword_sentences[k];
    for (auto& r : o.records) res.records.push_back(std::move(r));
  }
  res.unlabeled_sentences = opt.labeler->missing_count();
  return res;
}

// Re-derives a record's rule match from its text alone.
inline bool verify_record(const NleRecord& r, const Labeler& labeler, const KeywordLexicon& keywords,
                          const std::vector<RulePattern>& rules = builtin_rules()) {
  Sentence s;
  s.study_id = r.study_id;
  s.section = r.section;
  s.index = r.sentence_index;
  s.text = r.nle_text;
  bool kw = !tag_explanation(r.nle_text, keywords).empty();
  auto m = match_rule(labeler.label(s), kw, rules);
  return m && m->rule_id == r.rule_id && m->diagnosis == r.diagnosis && m->evidence == r.evidence;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json record_to_json(const NleRecord& r) {
  nlohmann::ordered_json j;
  j["subject_id"] = r.subject_id;
  j["study_id"] = r.study_id;
  j["image_id"] = r.image_id;
  j["view_position"] = view_name(r.view_position);
  j["section"] = section_name(r.section);
  j["sentence_index"] = r.sentence_index;
  j["nle"] = r.nle_text;
  auto diag = nlohmann::ordered_json::array();
  for (const auto& d : r.diagnosis) diag.push_back({label_name(d.label), certainty_name(d.certainty)});
  j["diagnosis"] = std::move(diag);
  auto ev = nlohmann::ordered_json::array();
  if (r.evidence.empty()) ev.push_back("other_misc");
  for (Label l : r.evidence) ev.push_back(label_name(l));
  j["evidence"] = std::move(ev);
  j["rule_id"] = "R" + std::to_string(r.rule_id);
  j["keywords"] = r.keywords;
  j["split"] = split_name(r.split);
  return j;
}

inline std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

inline NleRecord record_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw DataError("bad NLE record: " + what); };
  NleRecord r;
  try {
    r.subject_id = j.at("subject_id").get<std::string>();
    r.study_id = j.at("study_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.view_position = parse_view(j.at("view_position").get<std::string>());
    auto sec = parse_section(j.at("section").get<std::string>());
    if (!sec) fail("section");
    r.section = *sec;
    r.sentence_index = j.at("sentence_index").get<std::size_t>();
    r.nle_text = j.at("nle").get<std::string>();
    for (const auto& d : j.at("diagnosis")) {
      auto l = parse_label(d.at(0).get<std::string>());
      auto c = parse_certainty(d.at(1).get<std::string>());
      if (!l || !c) fail("diagnosis");
      r.diagnosis.push_back({*l, *c});
    }
    for (const auto& e : j.at("evidence")) {
      auto name = e.get<std::string>();
      if (name == "other_misc") continue;
      auto l = parse_label(name);
      if (!l) fail("evidence '" + name + "'");
      r.evidence.push_back(*l);
    }
    auto rid = j.at("rule_id").get<std::string>();
    if (rid.size() < 2 || rid[0] != 'R') fail("rule_id");
    r.rule_id = std::stoi(rid.substr(1));
    r.keywords = j.at("keywords").get<std::vector<std::string>>();
    auto sp = parse_split(j.at("split").get<std::string>());
    if (!sp) fail("split");
    r.split = *sp;
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  return r;
}

inline std::vector<NleRecord> read_records(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl, std::ios::binary);
  if (!in) throw DataError("cannot open " + jsonl.string());
  std::vector<NleRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct Histogram {
  std::vector<std::pair<std::vector<std::string>, std::size_t>> rows; // count desc, then key
};

namespace detail {

inline Histogram make_histogram(const std::map<std::vector<std::string>, std::size_t>& counts) {
  Histogram h;
  for (const auto& [k, v] : counts) h.rows.emplace_back(k, v);
  std::stable_sort(h.rows.begin(), h.rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return h;
}

inline std::vector<std::string> sorted_names(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  return names;
}

} // namespace detail

// Counts per image-sentence pair, keyed by alphabetically sorted label names.
inline Histogram diagnosis_histogram(const std::vector<NleRecord>& records) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (const auto& r : records) {
    std::vector<std::string> k;
    for (const auto& d : r.diagnosis) k.emplace_back(label_name(d.label));
    ++counts[detail::sorted_names(std::move(k))];
  }
  return detail::make_histogram(counts);
}

inline Histogram evidence_histogram(const std::vector<NleRecord>& records) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (const auto& r : records) {
    std::vector<std::string> k;
    for (Label l : r.evidence) k.emplace_back(label_name(l));
    if (k.empty()) k.emplace_back("other_misc");
    ++counts[detail::sorted_names(std::move(k))];
  }
  return detail::make_histogram(counts);
}

// Sentence counts per explanation phrase over all (unfiltered) sentences; zero rows omitted.
inline Histogram keyword_histogram(const PipelineResult& res) {
  Histogram h;
  for (std::size_t k = 0; k < res.keyword_phrases.size(); ++k)
    if (res.keyword_sentences[k] > 0) h.rows.push_back({{res.keyword_phrases[k]}, res.keyword_sentences[k]});
  std::stable_sort(h.rows.begin(), h.rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return h;
}

inline nlohmann::ordered_json stats_json(const PipelineResult& res, std::size_t unreadable = 0) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["reports"] = {{"total", res.reports_total + unreadable},
                  {"skipped_no_sections", res.reports_skipped},
                  {"unreadable", unreadable}};
  const auto& f = res.funnel;
  j["funnel"] = {{"sentences_total", f.sentences_total},
                 {"after_anonymized_filter", f.after_anonymized_filter},
                 {"after_nondescriptive_filter", f.after_nondescriptive_filter},
                 {"rule_matched", f.rule_matched},
                 {"after_dedup", f.after_dedup},
                 {"after_frontal_restriction", f.after_frontal_restriction}};
  nlohmann::ordered_json filtered;
  for (std::size_t k = 0; k < res.filtered.size(); ++k) filtered[std::string(kFilterReasonNames[k])] = res.filtered[k];
  j["filtered_by_reason"] = std::move(filtered);

  std::size_t triplets = 0;
  std::map<std::string, std::size_t> by_split;
  for (auto s : kSplitNames) by_split[std::string(s)] = 0;
  for (const auto& r : res.records) {
    triplets += r.diagnosis.size();
    ++by_split[std::string(split_name(r.split))];
  }
  nlohmann::ordered_json splits;
  for (auto s : kSplitNames) splits[std::string(s)] = by_split[std::string(s)];
  j["records"] = {{"image_nle_pairs", res.records.size()},
                  {"image_diagnosis_nle_triplets", triplets},
                  {"by_split", std::move(splits)}};

  auto hist = [](const Histogram& h, const char* key) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [k, v] : h.rows) arr.push_back({{key, k}, {"count", v}});
    return arr;
  };
  j["diagnosis_combinations"] = hist(diagnosis_histogram(res.records), "labels");
  j["evidence_combinations"] = hist(evidence_histogram(res.records), "labels");
  auto kw = nlohmann::ordered_json::array();
  for (const auto& [k, v] : keyword_histogram(res).rows) kw.push_back({{"keyword", k.front()}, {"count", v}});
  j["explanation_keywords"] = std::move(kw);
  j["unlabeled_sentences"] = res.unlabeled_sentences;
  return j;
}

inline void write_triplets(std::ostream& out, const std::vector<NleRecord>& records) {
  csv::write_row(out, {"subject_id", "study_id", "image_id", "view_position", "section", "sentence_index",
                       "diagnosis", "certainty", "evidence", "rule_id", "split", "nle"});
  for (const auto& r : records) {
    std::vector<std::string> ev;
    for (Label l : r.evidence) ev.emplace_back(label_name(l));
    std::string evidence = ev.empty() ? "other_misc" : text::join(ev, ";");
    for (const auto& d : r.diagnosis)
      csv::write_row(out, {r.subject_id, r.study_id, r.image_id, std::string(view_name(r.view_position)),
                           std::string(section_name(r.section)), std::to_string(r.sentence_index),
                           std::string(label_name(d.label)), std::string(certainty_name(d.certainty)), evidence,
                           "R" + std::to_string(r.rule_id), std::string(split_name(r.split)), r.nle_text});
  }
}

// Writes mimic_nle_<split>.jsonl for every split, triplets.csv, stats.json and
// ingest_errors.csv into out_dir.
inline void write_outputs(const std::filesystem::path& out_dir, const PipelineResult& res,
                          const std::vector<IngestError>& errors) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (out_dir / name).string());
    return out;
  };
  for (auto split : {Split::Train, Split::Dev, Split::Test, Split::Unassigned}) {
    auto out = open("mimic_nle_" + std::string(split_name(split)) + ".jsonl");
    for (const auto& r : res.records)
      if (r.split == split) out << dump_line(record_to_json(r)) << '\n';
    if (!out) throw DataError("write failure in " + out_dir.string());
  }
  {
    auto out = open("triplets.csv");
    write_triplets(out, res.records);
  }
  {
    std::size_t unreadable = static_cast<std::size_t>(
        std::count_if(errors.begin(), errors.end(), [](const IngestError& e) { return e.reason == "unreadable"; }));
    auto out = open("stats.json");
    out << stats_json(res, unreadable).dump(2) << '\n';
  }
  write_ingest_errors(out_dir / "ingest_errors.csv", errors);
}

} // namespace cxrnle
