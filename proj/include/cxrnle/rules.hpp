#pragma once

#include <cxrnle/labels.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cxrnle {

// Which labels may act as evidence for which diagnoses. The edge set is the
// one exercised by the extraction rules below.
struct EvidenceGraph {
  LabelSet evidence_capable;
  LabelSet diagnosis_capable;
  std::map<Label, LabelSet> edges;

  bool has_edge(Label evidence, Label diagnosis) const {
    auto it = edges.find(evidence);
    return it != edges.end() && it->second.contains(diagnosis);
  }
};

inline const EvidenceGraph& evidence_graph() {
  static const EvidenceGraph g = [] {
    using L = Label;
    EvidenceGraph g;
    g.evidence_capable = {L::LungOpacity, L::Consolidation, L::LungLesion, L::EnlargedCardiomediastinum};
    g.diagnosis_capable = {L::PleuralEffusion, L::Edema,       L::PleuralOther, L::Pneumothorax,
                           L::Pneumonia,       L::Atelectasis, L::Consolidation};
    g.edges[L::LungOpacity] = {L::PleuralEffusion, L::Edema,       L::PleuralOther, L::Pneumothorax,
                               L::Pneumonia,       L::Atelectasis, L::Consolidation};
    g.edges[L::Consolidation] = {L::Pneumonia, L::Atelectasis};
    g.edges[L::LungLesion] = {L::Pneumonia};
    g.edges[L::EnlargedCardiomediastinum] = {L::Edema, L::Atelectasis};
    return g;
  }();
  return g;
}

enum class CertaintyConstraint : std::uint8_t { Present, UncertainOnly, PositiveOnly };

constexpr bool satisfies(Certainty c, CertaintyConstraint k) {
  switch (k) {
    case CertaintyConstraint::Present: return is_present(c);
    case CertaintyConstraint::UncertainOnly: return c == Certainty::Uncertain;
    case CertaintyConstraint::PositiveOnly: return c == Certainty::Positive;
  }
  return false;
}

enum class DiagnosisKind : std::uint8_t {
  SingleOf,          // exactly one label from the pool
  UncertainSubset,   // two or more labels from the pool, all Uncertain
  Exact,             // exactly the listed labels with per-label constraints
};

struct RulePattern {
  int id = 0;               // 1..12
  bool other_misc = false;  // evidence not captured by any label
  LabelSet evidence;        // empty iff other_misc
  DiagnosisKind kind = DiagnosisKind::SingleOf;
  LabelSet pool;            // SingleOf / UncertainSubset
  std::vector<std::pair<Label, CertaintyConstraint>> exact;
  bool kw_required = false;

  std::string name() const { return "R" + std::to_string(id); }
};

struct RuleMatch {
  int rule_id = 0;
  std::vector<LabelCertainty> diagnosis; // label-code order
  std::vector<Label> evidence;           // label-code order; empty means other_misc

  bool other_misc() const { return evidence.empty(); }
  std::string rule_name() const { return "R" + std::to_string(rule_id); }
  bool operator==(const RuleMatch&) const = default;
};

inline const std::vector<RulePattern>& builtin_rules() {
  static const std::vector<RulePattern> rules = [] {
    using L = Label;
    using K = CertaintyConstraint;
    const LabelSet a = {L::PleuralEffusion, L::Edema, L::PleuralOther, L::Pneumothorax};
    const LabelSet b = a | LabelSet{L::Pneumonia, L::Atelectasis};
    auto single = [](int id, bool misc, LabelSet ev, LabelSet pool, bool kw) {
      RulePattern r;
      r.id = id;
      r.other_misc = misc;
      r.evidence = ev;
      r.kind = DiagnosisKind::SingleOf;
      r.pool = pool;
      r.kw_required = kw;
      return r;
    };
    auto subset = [](int id, bool misc, LabelSet ev, LabelSet pool, bool kw) {
      RulePattern r;
      r.id = id;
      r.other_misc = misc;
      r.evidence = ev;
      r.kind = DiagnosisKind::UncertainSubset;
      r.pool = pool;
      r.kw_required = kw;
      return r;
    };
    auto exact = [](int id, LabelSet ev, std::vector<std::pair<L, K>> d, bool kw) {
      RulePattern r;
      r.id = id;
      r.evidence = ev;
      r.kind = DiagnosisKind::Exact;
      r.exact = std::move(d);
      r.kw_required = kw;
      return r;
    };
    return std::vector<RulePattern>{
        single(1, true, {}, a, true),
        subset(2, true, {}, a, true),
        single(3, false, {L::LungOpacity}, b, false),
        subset(4, false, {L::LungOpacity}, b, false),
        exact(5, {L::LungOpacity}, {{L::Consolidation, K::Present}}, false),
        exact(6, {L::Consolidation}, {{L::Pneumonia, K::Present}}, false),
        exact(7, {L::LungOpacity, L::Consolidation}, {{L::Pneumonia, K::Present}}, false),
        exact(8, {L::LungLesion}, {{L::Pneumonia, K::Present}}, true),
        exact(9, {L::LungOpacity}, {{L::Atelectasis, K::PositiveOnly}, {L::Pneumonia, K::UncertainOnly}}, false),
        exact(10, {L::Consolidation}, {{L::Atelectasis, K::UncertainOnly}, {L::Pneumonia, K::UncertainOnly}}, false),
        exact(11, {L::EnlargedCardiomediastinum}, {{L::Edema, K::Present}}, true),
        exact(12, {L::EnlargedCardiomediastinum}, {{L::Atelectasis, K::Present}}, true),
    };
  }();
  return rules;
}

// Exact-set semantics: the substantive present set must equal evidence ∪ diagnosis.
inline std::optional<RuleMatch> match_pattern(const RulePattern& r, const LabelState& state, bool has_kw) {
  if (r.kw_required && !has_kw) return std::nullopt;
  const LabelSet present = state.present_set() & kSubstantiveLabels;
  if (!r.evidence.subset_of(present)) return std::nullopt;
  const LabelSet diag = present - r.evidence;
  switch (r.kind) {
    case DiagnosisKind::SingleOf:
      if (diag.size() != 1 || !diag.subset_of(r.pool)) return std::nullopt;
      break;
    case DiagnosisKind::UncertainSubset:
      if (diag.size() < 2 || !diag.subset_of(r.pool)) return std::nullopt;
      for (Label l : diag.to_vector())
        if (state[l] != Certainty::Uncertain) return std::nullopt;
      break;
    case DiagnosisKind::Exact: {
      LabelSet want;
      for (auto [l, k] : r.exact) {
        want.insert(l);
        if (!satisfies(state[l], k)) return std::nullopt;
      }
      if (diag != want) return std::nullopt;
      break;
    }
  }
  RuleMatch m;
  m.rule_id = r.id;
  for (Label l : diag.to_vector()) m.diagnosis.push_back({l, state[l]});
  m.evidence = r.evidence.to_vector();
  return m;
}

inline std::vector<int> matching_rules(const LabelState& state, bool has_kw,
                                       const std::vector<RulePattern>& rules = builtin_rules()) {
  std::vector<int> ids;
  for (const auto& r : rules)
    if (match_pattern(r, state, has_kw)) ids.push_back(r.id);
  return ids;
}

// The firing rule, or nothing when no rule (or, for a defective rule table,
// more than one rule) fires.
inline std::optional<RuleMatch> match_rule(const LabelState& state, bool has_kw,
                                           const std::vector<RulePattern>& rules = builtin_rules()) {
  std::optional<RuleMatch> found;
  for (const auto& r : rules) {
    if (auto m = match_pattern(r, state, has_kw)) {
      if (found) return std::nullopt;
      found = std::move(m);
    }
  }
  return found;
}

inline std::string describe(const RulePattern& r) {
  std::ostringstream os;
  auto list = [&](LabelSet s) {
    os << '{';
    bool first = true;
    for (Label l : s.to_vector()) {
      os << (first ? "" : ", ") << label_name(l);
      first = false;
    }
    os << '}';
  };
  os << r.name() << ": ";
  if (r.other_misc)
    os << "other_misc";
  else
    list(r.evidence);
  os << " -> ";
  switch (r.kind) {
    case DiagnosisKind::SingleOf: os << "one of "; list(r.pool); break;
    case DiagnosisKind::UncertainSubset: os << ">=2 uncertain of "; list(r.pool); break;
    case DiagnosisKind::Exact:
      os << '{';
      for (std::size_t i = 0; i < r.exact.size(); ++i) {
        os << (i ? ", " : "") << label_name(r.exact[i].first);
        if (r.exact[i].second == CertaintyConstraint::UncertainOnly) os << "^U";
        if (r.exact[i].second == CertaintyConstraint::PositiveOnly) os << "^P";
      }
      os << '}';
      break;
  }
  os << (r.kw_required ? " [kw required]" : "");
  return os.str();
}

// FNV-1a over the rule descriptions; printed by --version.
inline std::uint64_t rule_table_hash(const std::vector<RulePattern>& rules = builtin_rules()) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& r : rules) {
    for (unsigned char c : describe(r) + "\n") {
      h ^= c;
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Exclusivity audit

// The ten labels that appear in any rule.
inline constexpr std::array<Label, 10> kRuleLabels = {
    Label::LungOpacity,  Label::LungLesion,      Label::EnlargedCardiomediastinum, Label::Consolidation,
    Label::PleuralEffusion, Label::Edema,        Label::PleuralOther,              Label::Pneumothorax,
    Label::Pneumonia,    Label::Atelectasis,
};

struct AuditConflict {
  LabelState state;
  bool has_kw = false;
  std::vector<int> rules;
};

struct AuditReport {
  std::size_t inputs = 0;
  std::size_t matched_none = 0;
  std::size_t matched_once = 0;
  std::size_t matched_multiple = 0;
  std::map<int, std::size_t> per_rule;
  std::vector<AuditConflict> conflicts; // first few multi-matches

  bool ok() const { return matched_multiple == 0; }
};

// Enumerates {Absent, Uncertain, Positive}^10 over kRuleLabels × {kw, no kw}.
inline AuditReport audit_exclusivity(const std::vector<RulePattern>& rules = builtin_rules(),
                                     std::size_t keep_conflicts = 20) {
  static constexpr std::array<Certainty, 3> kValues = {Certainty::Absent, Certainty::Uncertain, Certainty::Positive};
  AuditReport rep;
  for (const auto& r : rules) rep.per_rule[r.id] = 0;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < kRuleLabels.size(); ++i) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    LabelState st;
    std::size_t c = code;
    for (Label l : kRuleLabels) {
      st.set(l, kValues[c % 3]);
      c /= 3;
    }
    for (bool kw : {false, true}) {
      ++rep.inputs;
      auto ids = matching_rules(st, kw, rules);
      if (ids.empty()) {
        ++rep.matched_none;
      } else if (ids.size() == 1) {
        ++rep.matched_once;
        ++rep.per_rule[ids.front()];
      } else {
        ++rep.matched_multiple;
        if (rep.conflicts.size() < keep_conflicts) rep.conflicts.push_back({st, kw, ids});
      }
    }
  }
  return rep;
}

} // namespace cxrnle
