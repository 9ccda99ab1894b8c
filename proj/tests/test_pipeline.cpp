#include <cxrnle/pipeline.hpp>

#include "corpus_gen.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace cxrnle;
using namespace testutil;
using L = Label;

namespace {

SentenceNle sent(Section sec, std::size_t idx, std::vector<LabelCertainty> diag, std::vector<Label> ev = {}) {
  SentenceNle s;
  s.study_id = "1";
  s.section = sec;
  s.sentence_index = idx;
  s.text = "s" + std::to_string(idx);
  s.match.rule_id = 3;
  s.match.diagnosis = std::move(diag);
  s.match.evidence = std::move(ev);
  return s;
}

std::string synthetic() { return data_dir() + "/synthetic"; }

Corpus load_synthetic(unsigned jobs = 1) {
  return load_corpus({synthetic() + "/reports", synthetic() + "/metadata.csv", synthetic() + "/splits.csv", {}}, jobs);
}

PipelineResult run(const Corpus& c, unsigned jobs = 1) {
  static const BuiltinLabeler labeler;
  PipelineOptions opt;
  opt.labeler = &labeler;
  opt.jobs = jobs;
  return run_pipeline(c, opt);
}

Report report_from(std::string study, std::string raw, std::vector<ImageMeta> images) {
  Report r;
  r.meta.subject_id = "1";
  r.meta.study_id = std::move(study);
  r.meta.images = std::move(images);
  r.raw_text = std::move(raw);
  std::tie(r.findings, r.impression) = extract_sections(r.raw_text);
  return r;
}

} // namespace

TEST(Dedup, FindingsCopyKept) {
  auto out = dedup({sent(Section::Impression, 3, {{L::Pneumonia, P}}, {L::LungOpacity}),
                    sent(Section::Findings, 1, {{L::Pneumonia, P}}, {L::LungOpacity})});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].section, Section::Findings);
}

TEST(Dedup, CertaintyIsPartOfTheKey) {
  std::vector<SentenceNle> in = {sent(Section::Findings, 0, {{L::Edema, U}}), sent(Section::Findings, 1, {{L::Edema, P}})};
  EXPECT_EQ(dedup(in).size(), 2u);
  auto collapsed = dedup(in, /*ignore_certainty=*/true);
  ASSERT_EQ(collapsed.size(), 1u);
  EXPECT_EQ(collapsed[0].sentence_index, 0u);
}

TEST(Dedup, SingleAndDifferentEvidence) {
  EXPECT_EQ(dedup({sent(Section::Findings, 0, {{L::Edema, U}})}).size(), 1u);
  EXPECT_EQ(dedup({sent(Section::Findings, 0, {{L::Pneumonia, P}}, {L::LungOpacity}),
                   sent(Section::Findings, 1, {{L::Pneumonia, P}}, {L::Consolidation})})
                .size(),
            2u);
  EXPECT_TRUE(dedup({}).empty());
}

TEST(ExpandPerImage, CrossProductWithFrontalImages) {
  auto s = sent(Section::Findings, 0, {{L::Edema, P}});
  std::vector<ImageMeta> two_ap = {{"b", ViewPosition::AP}, {"a", ViewPosition::AP}, {"c", ViewPosition::Lateral}};
  auto out = expand_per_image({s}, two_ap);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].image_id, "a");
  EXPECT_EQ(out[1].image_id, "b");
  EXPECT_EQ(expand_per_image({s, s}, {{"x", ViewPosition::Lateral}}).size(), 0u);
  auto pa = expand_per_image({s}, {{"p", ViewPosition::PA}});
  ASSERT_EQ(pa.size(), 1u);
  EXPECT_EQ(pa[0].view_position, ViewPosition::PA);
  EXPECT_EQ(pa[0].diagnosis, s.match.diagnosis);
}

TEST(Pipeline, EmptyCorpus) {
  auto res = run(Corpus{});
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.funnel, FunnelStats{});
  auto j = stats_json(res);
  EXPECT_TRUE(j["diagnosis_combinations"].empty());
  EXPECT_TRUE(j["evidence_combinations"].empty());
  EXPECT_TRUE(j["explanation_keywords"].empty());
  EXPECT_EQ(j["records"]["image_nle_pairs"], 0);
}

TEST(Pipeline, AllAnonymizedGivesNothing) {
  Corpus c;
  c.reports.push_back(report_from("1", "FINDINGS: ___ opacity concerning for pneumonia. Edema due to ___.",
                                  {{"i", ViewPosition::AP}}));
  auto res = run(c);
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.funnel.sentences_total, 2u);
  EXPECT_EQ(res.funnel.after_anonymized_filter, 0u);
}

TEST(Pipeline, LateralOnlyStudyDroppedLast) {
  Corpus c;
  c.reports.push_back(report_from("1", "FINDINGS: Opacity concerning for pneumonia.", {{"l", ViewPosition::Lateral}}));
  auto res = run(c);
  EXPECT_EQ(res.funnel.after_dedup, 1u);
  EXPECT_EQ(res.funnel.after_frontal_restriction, 0u);
  EXPECT_TRUE(res.records.empty());
}

TEST(Pipeline, MatchesHandDesignedTable) {
  // expected_nles.csv was written by hand from the report texts, not from a pipeline run.
  auto table = [] {
    std::ifstream in(synthetic() + "/expected_nles.csv", std::ios::binary);
    return csv::Table::read(in, "expected_nles.csv");
  }();
  auto res = run(load_synthetic());

  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<const NleRecord*>> got;
  for (const auto& r : res.records)
    got[{r.study_id, std::string(section_name(r.section)), r.sentence_index}].push_back(&r);
  ASSERT_EQ(got.size(), table.rows().size());
  for (const auto& row : table.rows()) {
    auto it = got.find({row[0], row[1], std::stoul(row[2])});
    ASSERT_NE(it, got.end()) << row[0] << " " << row[1] << " " << row[2];
    const NleRecord& r = *it->second.front();
    EXPECT_EQ("R" + std::to_string(r.rule_id), row[3]) << row[0];
    std::vector<std::string> diag;
    for (const auto& d : r.diagnosis) diag.push_back(std::string(label_name(d.label)) + "^" + std::string(certainty_name(d.certainty)));
    EXPECT_EQ(text::join(diag, ";"), row[4]) << row[0];
    if (!row[5].empty()) {
      std::vector<std::string> imgs;
      for (const auto* p : it->second) imgs.push_back(p->image_id);
      EXPECT_EQ(text::join(imgs, ";"), row[5]) << row[0];
    }
  }
}

TEST(Pipeline, SyntheticFunnelAndHistograms) {
  auto res = run(load_synthetic());
  EXPECT_EQ(res.funnel.stages(), (std::array<std::size_t, 6>{78, 77, 70, 29, 26, 24}));
  EXPECT_EQ(res.filtered, (std::array<std::size_t, 5>{1, 2, 1, 2, 2}));
  EXPECT_EQ(res.records.size(), 27u);

  // hand count over the 27 records
  std::map<std::vector<std::string>, std::size_t> expect = {
      {{"Pneumonia"}, 8},        {{"Atelectasis"}, 5},       {{"Edema"}, 5},
      {{"Atelectasis", "Pneumonia"}, 3}, {{"Pleural Effusion"}, 2}, {{"Edema", "Pleural Effusion"}, 1},
      {{"Pneumothorax"}, 1},     {{"Consolidation"}, 1},     {{"Pleural Other"}, 1}};
  auto h = diagnosis_histogram(res.records);
  std::map<std::vector<std::string>, std::size_t> seen(h.rows.begin(), h.rows.end());
  EXPECT_EQ(seen, expect);
  for (std::size_t i = 1; i < h.rows.size(); ++i) EXPECT_GE(h.rows[i - 1].second, h.rows[i].second);

  auto lex = default_lexicon();
  std::set<std::string> phrases(lex.explanation.begin(), lex.explanation.end());
  for (const auto& [k, v] : keyword_histogram(res).rows) EXPECT_TRUE(phrases.count(k.front())) << k.front();
}

TEST(Pipeline, GoldenFilesByteIdentical) {
  auto corpus = load_synthetic();
  for (unsigned jobs : {1u, 8u}) {
    TempDir d;
    write_outputs(d.path(), run(corpus, jobs), corpus.errors);
    for (const auto& entry : std::filesystem::directory_iterator(synthetic() + "/golden")) {
      auto name = entry.path().filename().string();
      EXPECT_EQ(slurp(d / name), slurp(entry.path())) << name << " jobs=" << jobs;
    }
  }
}

TEST(Pipeline, RecordsRoundTripThroughRules) {
  BuiltinLabeler labeler;
  auto lex = default_lexicon();
  auto res = run(load_synthetic());
  for (const auto& r : res.records) EXPECT_TRUE(verify_record(r, labeler, lex)) << r.study_id << " " << r.nle_text;
  auto bad = res.records.front();
  bad.rule_id = 12;
  EXPECT_FALSE(verify_record(bad, labeler, lex));
}

TEST(Pipeline, JsonRoundTrip) {
  auto res = run(load_synthetic());
  for (const auto& r : res.records) {
    auto line = dump_line(record_to_json(r));
    ASSERT_EQ(record_from_json(nlohmann::json::parse(line)), r) << line;
  }
  TempDir d;
  write_outputs(d.path(), res, {});
  EXPECT_EQ(read_records(d / "mimic_nle_dev.jsonl").size(), 3u);
  spit(d / "bad.jsonl", "{\"subject_id\": 1}\n");
  EXPECT_THROW(read_records(d / "bad.jsonl"), DataError);
}

TEST(Pipeline, RecordFieldsAndOrder) {
  auto res = run(load_synthetic());
  std::map<std::string, Split> study_split;
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& r = res.records[i];
    EXPECT_TRUE(is_frontal(r.view_position));
    EXPECT_FALSE(r.diagnosis.empty());
    auto [it, inserted] = study_split.emplace(r.study_id, r.split);
    EXPECT_EQ(it->second, r.split);
    if (i) {
      const auto& p = res.records[i - 1];
      EXPECT_LE(std::tie(p.subject_id, p.study_id, p.section, p.sentence_index, p.image_id),
                std::tie(r.subject_id, r.study_id, r.section, r.sentence_index, r.image_id));
    }
  }
}

TEST(PipelineProperties, FunnelMonotoneOnRandomCorpora) {
  std::mt19937 rng(17);
  for (int i = 0; i < 100; ++i) {
    auto res = run(random_corpus(rng, 1 + rng() % 40));
    ASSERT_TRUE(res.funnel.monotone()) << i;
    ASSERT_GE(res.records.size(), res.funnel.after_frontal_restriction);
  }
}

TEST(PipelineProperties, DeterministicAcrossJobs) {
  std::mt19937 rng(23);
  for (int i = 0; i < 10; ++i) {
    auto c = random_corpus(rng, 60);
    auto a = run(c, 1);
    auto b = run(c, 8);
    ASSERT_EQ(a.records, b.records);
    ASSERT_EQ(a.funnel, b.funnel);
    ASSERT_EQ(stats_json(a).dump(), stats_json(b).dump());
  }
}

TEST(PipelineProperties, FileCreationOrderDoesNotMatter) {
  TempDir a, b;
  std::mt19937 rng(5);
  std::vector<std::pair<std::string, std::string>> files;
  for (int i = 0; i < 40; ++i)
    files.emplace_back("p" + std::to_string(i % 5) + "/s" + std::to_string(100 + i) + ".txt", random_report_text(rng));
  for (const auto& [p, t] : files) spit(a / p, t);
  std::shuffle(files.begin(), files.end(), rng);
  for (const auto& [p, t] : files) spit(b / p, t);
  auto ra = run(load_corpus({a.path(), {}, {}, {}}));
  auto rb = run(load_corpus({b.path(), {}, {}, {}}));
  EXPECT_EQ(ra.funnel, rb.funnel);
  EXPECT_EQ(stats_json(ra).dump(), stats_json(rb).dump());
}

TEST(Pipeline, TripletsExplodeDiagnoses) {
  auto res = run(load_synthetic());
  std::ostringstream out;
  write_triplets(out, res.records);
  std::istringstream in(out.str());
  auto t = csv::Table::read(in, "triplets");
  std::size_t expected = 0;
  for (const auto& r : res.records) expected += r.diagnosis.size();
  EXPECT_EQ(t.rows().size(), expected);
  EXPECT_EQ(expected, 31u);
}

TEST(Pipeline, LabelerIsRequired) {
  PipelineOptions opt;
  EXPECT_THROW(run_pipeline(Corpus{}, opt), std::invalid_argument);
}
