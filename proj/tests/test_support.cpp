#include <cxrnle/config.hpp>
#include <cxrnle/csv.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/parallel.hpp>
#include <cxrnle/text.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace cxrnle;
using namespace testutil;

TEST(Labels, CodesAndNamesRoundTrip) {
  ASSERT_EQ(kAllLabels.size(), 14u);
  for (std::size_t i = 0; i < kAllLabels.size(); ++i) {
    EXPECT_EQ(index_of(kAllLabels[i]), i);
    EXPECT_EQ(parse_label(label_name(kAllLabels[i])), kAllLabels[i]);
  }
  EXPECT_EQ(label_name(Label::EnlargedCardiomediastinum), "Enlarged Cardiomediastinum");
  EXPECT_EQ(index_of(Label::NoFinding), 13u);
  EXPECT_FALSE(parse_label("Lung opacity"));
  EXPECT_FALSE(kSubstantiveLabels.contains(Label::NoFinding));
  EXPECT_EQ(kSubstantiveLabels.size(), 13u);
}

TEST(Labels, PresentSetIsUncertainOrPositive) {
  auto s = state({{Label::Edema, N}, {Label::Pneumonia, U}, {Label::Atelectasis, P}});
  EXPECT_EQ(s.present_set(), (LabelSet{Label::Pneumonia, Label::Atelectasis}));
  EXPECT_EQ(parse_certainty("uncertain"), U);
  EXPECT_FALSE(parse_certainty("maybe"));
}

TEST(Labels, LabelSetOps) {
  LabelSet a{Label::Edema, Label::Pneumonia};
  LabelSet b{Label::Pneumonia};
  EXPECT_TRUE(b.subset_of(a));
  EXPECT_FALSE(a.subset_of(b));
  EXPECT_EQ((a - b), LabelSet{Label::Edema});
  EXPECT_EQ((a & b), b);
  EXPECT_EQ(a.to_vector(), (std::vector<Label>{Label::Edema, Label::Pneumonia}));
}

TEST(Text, Helpers) {
  EXPECT_EQ(text::trim("  a b \n"), "a b");
  EXPECT_EQ(text::normalize_space(" a \t b\n\nc "), "a b c");
  EXPECT_EQ(text::find_all("aaa", "aa"), (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(text::at_word_boundaries("no ct scan", 3, 2));
  EXPECT_FALSE(text::at_word_boundaries("reflect", 5, 2));
}

TEST(Csv, QuotedFieldsAndRowNumbers) {
  std::istringstream in("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\n1,\"multi\nline\"\n");
  auto t = csv::Table::read(in, "t.csv");
  ASSERT_EQ(t.rows().size(), 2u);
  EXPECT_EQ(t.rows()[0][0], "x, y");
  EXPECT_EQ(t.rows()[0][1], "he said \"hi\"");
  EXPECT_EQ(t.rows()[1][1], "multi\nline");
  EXPECT_EQ(t.line_of(1), 4u);
}

TEST(Csv, WrongFieldCountNamesTheRow) {
  std::istringstream in("a,b\n1,2\n3\n");
  try {
    csv::Table::read(in, "bad.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Csv, WriteRoundTrip) {
  std::ostringstream out;
  csv::write_row(out, {"plain", "with,comma", "with \"quote\"", "line\nbreak"});
  std::istringstream in("h1,h2,h3,h4\n" + out.str());
  auto t = csv::Table::read(in, "rt");
  ASSERT_EQ(t.rows().size(), 1u);
  EXPECT_EQ(t.rows()[0], (csv::Row{"plain", "with,comma", "with \"quote\"", "line\nbreak"}));
}

TEST(Config, SectionsListsAndScalars) {
  auto doc = config::Document::parse(R"(
# comment
top = "x"
[pipeline]
jobs = 4
dedup_ignore_certainty = true
[keywords]
explanation = [
  "due",      # trailing comment
  "reflect",
]
)");
  EXPECT_EQ(doc.get_string("top"), "x");
  EXPECT_EQ(doc.get_in<double>("pipeline", "jobs"), 4.0);
  EXPECT_EQ(doc.get_in<bool>("pipeline", "dedup_ignore_certainty"), true);
  EXPECT_EQ(doc.get_in<std::vector<std::string>>("keywords", "explanation"),
            (std::vector<std::string>{"due", "reflect"}));
  EXPECT_FALSE(doc.get_in<std::string>("pipeline", "missing"));
  EXPECT_THROW(doc.get_in<std::string>("pipeline", "jobs"), DataError);
}

TEST(Config, Errors) {
  EXPECT_THROW(config::Document::parse("a = 1\na = 2\n"), DataError);
  EXPECT_THROW(config::Document::parse("a = \"unterminated\n"), DataError);
  EXPECT_THROW(config::Document::parse("[sec\n"), DataError);
  EXPECT_THROW(config::Document::parse("novalue\n"), DataError);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  for (unsigned jobs : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) ASSERT_EQ(h.load(), 1);
  }
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(500, 4,
                            [](std::size_t i) {
                              if (i == 321) throw DataError("boom");
                            }),
               DataError);
}
