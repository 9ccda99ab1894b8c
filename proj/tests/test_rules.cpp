#include <cxrnle/rules.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace cxrnle;
using namespace testutil;

namespace {

// Straight transcription of the rule table as predicates over the present set;
// deliberately shares no code with RulePattern.
std::vector<int> oracle_rules(const LabelState& s, bool kw) {
  using L = Label;
  std::set<L> present;
  for (L l : kSubstantiveLabels.to_vector())
    if (s[l] == U || s[l] == P) present.insert(l);
  const std::set<L> a = {L::PleuralEffusion, L::Edema, L::PleuralOther, L::Pneumothorax};
  std::set<L> b = a;
  b.insert(L::Pneumonia);
  b.insert(L::Atelectasis);

  auto without = [&](std::set<L> ev) -> std::optional<std::set<L>> {
    for (L e : ev)
      if (!present.count(e)) return std::nullopt;
    std::set<L> rest;
    for (L l : present)
      if (!ev.count(l)) rest.insert(l);
    return rest;
  };
  auto within = [](const std::set<L>& xs, const std::set<L>& pool) {
    for (L x : xs)
      if (!pool.count(x)) return false;
    return true;
  };
  auto all_unc = [&](const std::set<L>& xs) {
    for (L x : xs)
      if (s[x] != U) return false;
    return true;
  };

  std::vector<int> out;
  auto d0 = without({});
  if (kw && d0->size() == 1 && within(*d0, a)) out.push_back(1);
  if (kw && d0->size() >= 2 && within(*d0, a) && all_unc(*d0)) out.push_back(2);
  if (auto d = without({L::LungOpacity})) {
    if (d->size() == 1 && within(*d, b)) out.push_back(3);
    if (d->size() >= 2 && within(*d, b) && all_unc(*d)) out.push_back(4);
    if (*d == std::set<L>{L::Consolidation}) out.push_back(5);
    if (*d == std::set<L>{L::Atelectasis, L::Pneumonia} && s[L::Atelectasis] == P && s[L::Pneumonia] == U)
      out.push_back(9);
  }
  if (auto d = without({L::Consolidation})) {
    if (*d == std::set<L>{L::Pneumonia}) out.push_back(6);
    if (*d == std::set<L>{L::Atelectasis, L::Pneumonia} && s[L::Atelectasis] == U && s[L::Pneumonia] == U)
      out.push_back(10);
  }
  if (auto d = without({L::LungOpacity, L::Consolidation}); d && *d == std::set<L>{L::Pneumonia}) out.push_back(7);
  if (auto d = without({L::LungLesion}); kw && d && *d == std::set<L>{L::Pneumonia}) out.push_back(8);
  if (auto d = without({L::EnlargedCardiomediastinum}); kw && d) {
    if (*d == std::set<L>{L::Edema}) out.push_back(11);
    if (*d == std::set<L>{L::Atelectasis}) out.push_back(12);
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename Fn>
void for_each_rule_input(Fn&& fn) {
  static constexpr Certainty kVals[3] = {Certainty::Absent, U, P};
  for (std::size_t code = 0; code < 59049; ++code) {
    LabelState st;
    std::size_t c = code;
    for (Label l : kRuleLabels) {
      st.set(l, kVals[c % 3]);
      c /= 3;
    }
    fn(st, false);
    fn(st, true);
  }
}

} // namespace

TEST(RuleTable, TwelveRulesWithKeywordFlags) {
  const auto& rules = builtin_rules();
  ASSERT_EQ(rules.size(), 12u);
  std::set<int> kw;
  for (const auto& r : rules)
    if (r.kw_required) kw.insert(r.id);
  EXPECT_EQ(kw, (std::set<int>{1, 2, 8, 11, 12}));
  EXPECT_FALSE(rules[5].kw_required); // R6
  EXPECT_TRUE(rules[10].kw_required); // R11
}

TEST(RuleTable, SpecExamples) {
  using L = Label;
  auto m = match_rule(state({{L::Consolidation, P}, {L::Pneumonia, U}}), false);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->rule_id, 6);
  EXPECT_EQ(m->evidence, std::vector<Label>{L::Consolidation});
  EXPECT_EQ(m->diagnosis, (std::vector<LabelCertainty>{{L::Pneumonia, U}}));

  EXPECT_FALSE(match_rule(state({{L::Edema, U}}), false));
  auto r1 = match_rule(state({{L::Edema, U}}), true);
  ASSERT_TRUE(r1);
  EXPECT_EQ(r1->rule_id, 1);
  EXPECT_TRUE(r1->other_misc());

  EXPECT_FALSE(match_rule(state({{L::Consolidation, P}, {L::Atelectasis, P}}), true));

  auto r9 = match_rule(state({{L::LungOpacity, P}, {L::Atelectasis, P}, {L::Pneumonia, U}}), false);
  ASSERT_TRUE(r9);
  EXPECT_EQ(r9->rule_id, 9);

  auto r2 = match_rule(state({{L::PleuralEffusion, U}, {L::Pneumothorax, U}}), true);
  ASSERT_TRUE(r2);
  EXPECT_EQ(r2->rule_id, 2);
  EXPECT_EQ(r2->diagnosis, (std::vector<LabelCertainty>{{L::Pneumothorax, U}, {L::PleuralEffusion, U}}));

  EXPECT_FALSE(match_rule(LabelState{}, true));
}

TEST(RuleTable, AuditExamples) {
  using L = Label;
  EXPECT_EQ(matching_rules(state({{L::LungOpacity, P}, {L::Pneumonia, U}, {L::Atelectasis, U}}), false),
            std::vector<int>{4});
  EXPECT_EQ(matching_rules(state({{L::LungOpacity, P}, {L::Consolidation, P}, {L::Pneumonia, U}}), false),
            std::vector<int>{7});
}

TEST(RuleTable, ExtraPresentLabelBlocksEverything) {
  using L = Label;
  for (L extra : {L::SupportDevices, L::Cardiomegaly, L::Fracture})
    for (Certainty c : {U, P}) {
      auto s = state({{L::Consolidation, P}, {L::Pneumonia, P}});
      s.set(extra, c);
      EXPECT_FALSE(match_rule(s, true)) << label_name(extra);
    }
}

TEST(RuleTable, NoFindingIsIgnored) {
  auto s = state({{Label::Consolidation, P}, {Label::Pneumonia, P}, {Label::NoFinding, P}});
  auto m = match_rule(s, false);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->rule_id, 6);
}

TEST(RuleTable, AgreesWithOracleOnFullEnumeration) {
  std::size_t checked = 0;
  for_each_rule_input([&](const LabelState& s, bool kw) {
    auto got = matching_rules(s, kw);
    ASSERT_EQ(got, oracle_rules(s, kw));
    ++checked;
  });
  EXPECT_EQ(checked, 118098u);
}

TEST(RuleTable, AtMostOneRuleFires) {
  auto rep = audit_exclusivity();
  EXPECT_EQ(rep.inputs, 118098u);
  EXPECT_EQ(rep.matched_multiple, 0u);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.matched_none + rep.matched_once, rep.inputs);
  for (const auto& [id, n] : rep.per_rule) EXPECT_GT(n, 0u) << "R" << id;
}

TEST(RuleTable, AuditDetectsDefectiveTable) {
  auto rules = builtin_rules();
  rules.push_back(rules[5]); // duplicate R6 under a new id
  rules.back().id = 13;
  auto rep = audit_exclusivity(rules, 3);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(rep.conflicts.size(), 3u);
  EXPECT_EQ(rep.conflicts[0].rules, (std::vector<int>{6, 13}));
  // match_rule refuses to pick between the duplicates
  EXPECT_FALSE(match_rule(state({{Label::Consolidation, P}, {Label::Pneumonia, P}}), false, rules));
}

TEST(RuleProperties, KeywordOnlyEnables) {
  for_each_rule_input([](const LabelState& s, bool kw) {
    if (kw) return;
    if (auto m = match_rule(s, false)) {
      auto with = match_rule(s, true);
      ASSERT_TRUE(with);
      ASSERT_EQ(*with, *m);
    }
  });
}

TEST(RuleProperties, MatchesFollowEvidenceGraph) {
  const auto& g = evidence_graph();
  for_each_rule_input([&](const LabelState& s, bool kw) {
    auto m = match_rule(s, kw);
    if (!m || m->other_misc()) return;
    for (Label e : m->evidence)
      for (const auto& d : m->diagnosis) ASSERT_TRUE(g.has_edge(e, d.label)) << label_name(e) << "->" << label_name(d.label);
  });
}

TEST(RuleProperties, NegativeLabelsNeverMatter) {
  std::mt19937 rng(7);
  for_each_rule_input([&](const LabelState& s, bool kw) {
    if (rng() % 8) return; // sample an eighth of the space
    LabelState t = s;
    for (Label l : kAllLabels)
      if (t[l] == Certainty::Absent && rng() % 2) t.set(l, N);
    ASSERT_EQ(match_rule(s, kw), match_rule(t, kw));
  });
}

TEST(RuleProperties, ConsolidationAtelectasisNeverMatches) {
  for (Certainty a : {U, P})
    for (Certainty b : {U, P})
      for (bool kw : {false, true})
        EXPECT_FALSE(match_rule(state({{Label::Consolidation, a}, {Label::Atelectasis, b}}), kw));
}

TEST(RuleTable, HashIsStableAndSensitive) {
  EXPECT_EQ(rule_table_hash(), rule_table_hash(builtin_rules()));
  auto rules = builtin_rules();
  rules[0].kw_required = false;
  EXPECT_NE(rule_table_hash(rules), rule_table_hash());
}

TEST(RuleTable, DescribeMentionsSuperscripts) {
  EXPECT_EQ(describe(builtin_rules()[8]), "R9: {Lung Opacity} -> {Atelectasis^P, Pneumonia^U}");
  EXPECT_EQ(describe(builtin_rules()[0]).find("other_misc"), 4u);
}
