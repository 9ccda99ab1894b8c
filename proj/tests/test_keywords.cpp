#include <cxrnle/keywords.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace cxrnle;
using namespace testutil;

namespace {

std::vector<std::string> phrases(const std::vector<KeywordMatch>& ms) {
  std::vector<std::string> out;
  for (const auto& m : ms) out.push_back(m.phrase);
  return out;
}

} // namespace

TEST(Lexicon, DefaultLists) {
  auto lex = default_lexicon();
  EXPECT_EQ(lex.explanation.size(), 14u);
  EXPECT_EQ(lex.exemptions.size(), 3u);
  EXPECT_NE(std::find(lex.explanation.begin(), lex.explanation.end(), "worrisome for"), lex.explanation.end());
  EXPECT_EQ(lex.history.size(), 8u);
  EXPECT_EQ(lex.recommendations, (std::vector<std::string>{"recommend", "perform", "follow"}));
  EXPECT_EQ(lex.technical.size(), 7u);
  EXPECT_EQ(lex.extra_excluded, std::vector<std::string>{"finding"});
  EXPECT_NO_THROW(lex.validate());
}

TEST(Lexicon, ValidationRejectsBadLists) {
  auto lex = default_lexicon();
  lex.history.push_back("Prior");
  EXPECT_THROW(lex.validate(), DataError);
  lex = default_lexicon();
  lex.exemptions.push_back("nothing in common");
  EXPECT_THROW(lex.validate(), DataError);
}

TEST(Lexicon, ConfigOverridesSomeLists) {
  auto doc = config::Document::parse("[keywords]\nexplanation = [\"due\"]\nexemptions = []\n");
  auto lex = load_keyword_lexicon(doc);
  EXPECT_EQ(lex.explanation, std::vector<std::string>{"due"});
  EXPECT_TRUE(lex.exemptions.empty());
  EXPECT_EQ(lex.history, default_lexicon().history);
}

TEST(Tagging, SpecExamples) {
  auto lex = default_lexicon();
  auto m = tag_explanation(
      "Right upper lobe new consolidation is compatible with atelectasis with possibly superimposed aspiration.", lex);
  ASSERT_EQ(phrases(m), std::vector<std::string>{"compatible with"});
  EXPECT_EQ(m[0].offset, 38u);
  EXPECT_TRUE(tag_explanation("There is suggestion of edema.", lex).empty());
  EXPECT_EQ(phrases(tag_explanation("Findings may represent pneumonia.", lex)),
            std::vector<std::string>{"may represent"});
  EXPECT_EQ(classify_filter("Findings may represent pneumonia.", lex), FilterReason::FindingWord);
}

TEST(Tagging, StemsAndExemptions) {
  auto lex = default_lexicon();
  EXPECT_EQ(phrases(tag_explanation("Opacity suggests pneumonia.", lex)), std::vector<std::string>{"suggest"});
  EXPECT_EQ(phrases(tag_explanation("Opacity, as is suggested, is edema.", lex)), std::vector<std::string>{});
  EXPECT_TRUE(tag_explanation("Please correlate clinically.", lex).empty());
  // "relate" inside "correlate" is exempt, a second free occurrence is not
  EXPECT_EQ(phrases(tag_explanation("Correlate; opacity may relate to edema.", lex)),
            std::vector<std::string>{"relate"});
  EXPECT_EQ(phrases(tag_explanation("Suggestion of edema, suggesting overload.", lex)),
            std::vector<std::string>{"suggest"});
}

TEST(Tagging, SortedByOffsetThenLexiconOrder) {
  auto lex = default_lexicon();
  auto m = tag_explanation("Likely due to edema and likely represents atelectasis, which may represent collapse.", lex);
  EXPECT_EQ(phrases(m), (std::vector<std::string>{"due", "likely represent", "may represent"}));
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i - 1].offset, m[i].offset);
  EXPECT_EQ(distinct_phrases(tag_explanation("Due to edema, due to effusion.", lex)),
            std::vector<std::string>{"due"});
}

TEST(Filter, SpecExamplesAndPrecedence) {
  auto lex = default_lexicon();
  EXPECT_EQ(classify_filter("Compared to the prior study, stable.", lex), FilterReason::PatientHistory);
  EXPECT_EQ(classify_filter("___ year old with cough.", lex), FilterReason::Anonymized);
  EXPECT_EQ(classify_filter("There is a left pleural effusion.", lex), std::nullopt);
  EXPECT_EQ(classify_filter("Recommend follow-up imaging after prior.", lex), FilterReason::PatientHistory);
  EXPECT_EQ(classify_filter("Recommend imaging.", lex), FilterReason::Recommendation);
  EXPECT_EQ(classify_filter("Supine position limits evaluation.", lex), FilterReason::Technical);
  EXPECT_EQ(classify_filter("Supposition only.", lex), std::nullopt);
  EXPECT_EQ(classify_filter("Deteriorating aeration.", lex), FilterReason::PatientHistory);
}

TEST(Filter, CtIsMatchedAsAWord) {
  auto lex = default_lexicon();
  EXPECT_EQ(classify_filter("Nodule better seen on CT.", lex), FilterReason::Technical);
  EXPECT_EQ(classify_filter("Correlate with chest ct/mri.", lex), FilterReason::Technical);
  EXPECT_EQ(classify_filter("Opacity likely reflects atelectasis.", lex), std::nullopt);
  EXPECT_EQ(classify_filter("Infectious process.", lex), std::nullopt);
  // a plain-substring lexicon restores the naive behaviour
  lex.technical = {"ct"};
  EXPECT_EQ(classify_filter("Opacity likely reflects atelectasis.", lex), FilterReason::Technical);
}

TEST(Filter, UnderscoreAlwaysWins) {
  auto lex = default_lexicon();
  std::mt19937 rng(1);
  const std::vector<std::string> parts = {"prior ", "recommend ", "ct ", "finding ", "edema ", "due to "};
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (int k = static_cast<int>(rng() % 5); k > 0; --k) s += parts[rng() % parts.size()];
    s.insert(rng() % (s.size() + 1), "_");
    ASSERT_EQ(classify_filter(s, lex), FilterReason::Anonymized) << s;
  }
}

TEST(Tagging, NoMatchInsideInjectedExemption) {
  auto lex = default_lexicon();
  std::mt19937 rng(2);
  const std::vector<std::string> fill = {"edema ", "opacity ", "due ", "relate ", "with ", "suggest "};
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (int k = static_cast<int>(rng() % 4); k > 0; --k) s += fill[rng() % fill.size()];
    const auto& ex = lex.exemptions[rng() % lex.exemptions.size()];
    std::size_t at = s.size();
    s += ex + " ";
    for (int k = static_cast<int>(rng() % 4); k > 0; --k) s += fill[rng() % fill.size()];
    for (const auto& m : tag_explanation(s, lex)) {
      std::size_t end = m.offset + m.phrase.size();
      ASSERT_FALSE(m.offset >= at && end <= at + ex.size()) << s;
    }
  }
}

TEST(Tagging, CaseInsensitive) {
  auto lex = default_lexicon();
  for (const char* s : {"Opacity Is Compatible With Pneumonia.", "likely represents EDEMA due to CHF",
                        "There is SUGGESTION of edema.", "Prior CT imaging."}) {
    std::string up = s;
    for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    EXPECT_EQ(tag_explanation(s, lex), tag_explanation(up, lex)) << s;
    EXPECT_EQ(classify_filter(s, lex), classify_filter(up, lex)) << s;
  }
}
