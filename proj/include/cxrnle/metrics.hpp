#pragma once

#include <cxrnle/csv.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/mention.hpp>
#include <cxrnle/parallel.hpp>
#include <cxrnle/segmenter.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace cxrnle {

inline constexpr std::size_t kNumCertaintyLevels = 3; // negative, uncertain, positive
inline constexpr std::size_t kNumPathologies = 10;

using PathologyList = std::array<Label, kNumPathologies>;

// Diagnosis labels of the rule table plus the three evidence-only findings, in code order.
inline constexpr PathologyList kDefaultPathologies = {
    Label::EnlargedCardiomediastinum, Label::LungOpacity,  Label::LungLesion,
    Label::Edema,                     Label::Consolidation, Label::Pneumonia,
    Label::Atelectasis,               Label::Pneumothorax, Label::PleuralEffusion,
    Label::PleuralOther,
};

inline PathologyList parse_pathologies(const std::vector<std::string>& names) {
  if (names.size() != kNumPathologies)
    throw DataError("pathology list must name exactly " + std::to_string(kNumPathologies) + " labels");
  PathologyList out{};
  LabelSet seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto l = parse_label(std::string(text::trim(names[i])));
    if (!l) throw DataError("unknown pathology '" + names[i] + "'");
    if (seen.contains(*l)) throw DataError("duplicate pathology '" + names[i] + "'");
    seen.insert(*l);
    out[i] = *l;
  }
  return out;
}

inline std::optional<std::size_t> pathology_index(const PathologyList& list, Label l) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == l) return i;
  return std::nullopt;
}

// Per-image U-MultiClass output: scores[certainty][pathology].
struct PredictionMatrix {
  std::array<std::array<double, kNumPathologies>, kNumCertaintyLevels> scores{};

  // Probability of the merged uncertain-or-positive class.
  double binary_score(std::size_t p) const { return scores[1][p] + scores[2][p]; }

  void validate(const std::string& where) const {
    for (std::size_t p = 0; p < kNumPathologies; ++p) {
      double sum = 0;
      for (std::size_t c = 0; c < kNumCertaintyLevels; ++c) {
        double v = scores[c][p];
        if (!(v >= 0.0 && v <= 1.0)) throw DataError(where + ": score outside [0,1] for pathology " + std::to_string(p));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        throw DataError(where + ": scores for pathology " + std::to_string(p) + " sum to " + std::to_string(sum));
    }
  }
};

struct EvalPair {
  std::string image_id;
  Label diagnosis = Label::Pneumonia;
  std::string gt_nle;
  std::string gen_nle;
  bool gt_binary = false;
  double pred_score = 0.0;
  std::optional<double> spice;
  std::optional<double> bertscore;
};

// NLEs are only scored for labels that are present in the ground truth and
// predicted present (uncertain + positive >= threshold).
inline std::vector<EvalPair> filter_correct(const std::vector<EvalPair>& pairs, double threshold = 0.5) {
  std::vector<EvalPair> out;
  for (const auto& p : pairs)
    if (p.gt_binary && p.pred_score >= threshold) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// CLEV

inline constexpr LabelSet kClevEvidenceLabels = {Label::LungOpacity, Label::Consolidation, Label::LungLesion,
                                                 Label::EnlargedCardiomediastinum};

inline LabelSet evidence_labels(std::string_view nle, Label diagnosis, const Labeler& labeler) {
  Sentence s;
  s.text = text::normalize_space(nle);
  LabelSet ev = labeler.label(s).present_set() & kClevEvidenceLabels;
  ev.erase(diagnosis);
  return ev;
}

// Share of pairs whose generated NLE refers to exactly the GT evidence labels.
inline std::optional<double> clev(const std::vector<EvalPair>& pairs, const Labeler& labeler) {
  if (pairs.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const auto& p : pairs)
    if (evidence_labels(p.gt_nle, p.diagnosis, labeler) == evidence_labels(p.gen_nle, p.diagnosis, labeler)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// AUC

// Mann-Whitney rank statistic with average ranks for ties. Needs at least one
// positive and one negative example.
inline std::optional<double> auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::size_t n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) rank_sum += avg_rank;
    i = j;
  }
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct WeightedAuc {
  std::optional<double> value;
  std::vector<std::optional<double>> per_pathology;
  std::vector<std::size_t> support; // GT-positive count per pathology
  std::vector<std::size_t> excluded; // pathologies lacking a positive or a negative
};

// scores[image][pathology] against binary GT; support-weighted mean of the
// per-pathology AUCs.
inline WeightedAuc weighted_auc(const std::vector<std::vector<double>>& scores,
                                const std::vector<std::vector<bool>>& gt) {
  if (scores.size() != gt.size()) throw DataError("weighted_auc: score/GT image count mismatch");
  WeightedAuc out;
  std::size_t n_path = scores.empty() ? 0 : scores.front().size();
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < n_path; ++p) {
    std::vector<double> s;
    std::vector<bool> y;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != n_path || gt[i].size() != n_path) throw DataError("weighted_auc: ragged input");
      s.push_back(scores[i][p]);
      y.push_back(gt[i][p]);
    }
    auto a = auc(s, y);
    std::size_t support = static_cast<std::size_t>(std::count(y.begin(), y.end(), true));
    out.per_pathology.push_back(a);
    out.support.push_back(support);
    if (!a) {
      out.excluded.push_back(p);
      continue;
    }
    num += static_cast<double>(support) * *a;
    den += static_cast<double>(support);
  }
  if (den > 0) out.value = num / den;
  return out;
}

// Uncertain and Positive GT merge into the positive class.
inline WeightedAuc weighted_auc(const std::vector<std::pair<PredictionMatrix, LabelState>>& images,
                                const PathologyList& pathologies = kDefaultPathologies) {
  std::vector<std::vector<double>> s;
  std::vector<std::vector<bool>> y;
  for (const auto& [pred, state] : images) {
    std::vector<double> row;
    std::vector<bool> lab;
    for (std::size_t p = 0; p < kNumPathologies; ++p) {
      row.push_back(pred.binary_score(p));
      lab.push_back(is_present(state[pathologies[p]]));
    }
    s.push_back(std::move(row));
    y.push_back(std::move(lab));
  }
  return weighted_auc(s, y);
}

// ---------------------------------------------------------------------------
// NLG metrics. All operate on tokenize() output with punctuation-only tokens removed.

inline std::vector<std::string> nlg_tokens(std::string_view s) {
  auto toks = tokenize(s);
  toks.erase(std::remove_if(toks.begin(), toks.end(),
                            [](const std::string& t) { return std::all_of(t.begin(), t.end(), text::is_punct); }),
             toks.end());
  return toks;
}

namespace detail {

using Tokens = std::vector<std::string>;

inline void check_aligned(std::size_t a, std::size_t b) {
  if (a != b)
    throw DataError("candidate/reference count mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

inline std::vector<Tokens> tokenize_all(const std::vector<std::string>& xs) {
  std::vector<Tokens> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(nlg_tokens(x));
  return out;
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                                                               t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

} // namespace detail

// Corpus-level BLEU-1..4 (one reference per candidate), brevity penalty, no smoothing.
inline std::array<double, 4> bleu(const std::vector<std::string>& cands, const std::vector<std::string>& refs) {
  detail::check_aligned(cands.size(), refs.size());
  std::array<double, 4> matched{}, total{};
  double c_len = 0, r_len = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto c = nlg_tokens(cands[i]);
    auto r = nlg_tokens(refs[i]);
    c_len += static_cast<double>(c.size());
    r_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cc = detail::ngram_counts(c, n);
      auto rc = detail::ngram_counts(r, n);
      for (const auto& [g, k] : cc) {
        total[n - 1] += static_cast<double>(k);
        auto it = rc.find(g);
        if (it != rc.end()) matched[n - 1] += static_cast<double>(std::min(k, it->second));
      }
    }
  }
  std::array<double, 4> out{};
  if (c_len == 0) return out;
  double bp = c_len > r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    if (total[n] == 0 || matched[n] == 0) zero = true;
    if (!zero) log_sum += std::log(matched[n] / total[n]);
    out[n] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return out;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l_pair(const std::vector<std::string>& c, const std::vector<std::string>& r, double beta = 1.2) {
  if (c.empty() || r.empty()) return 0.0;
  double lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0) return 0.0;
  double p = lcs / static_cast<double>(c.size());
  double rec = lcs / static_cast<double>(r.size());
  return (1 + beta * beta) * p * rec / (rec + beta * beta * p);
}

// Mean sentence-level ROUGE-L F-measure (beta = 1.2).
inline double rouge_l(const std::vector<std::string>& cands, const std::vector<std::string>& refs, unsigned jobs = 1) {
  detail::check_aligned(cands.size(), refs.size());
  if (cands.empty()) return 0.0;
  std::vector<double> per(cands.size());
  parallel_for(cands.size(), jobs,
               [&](std::size_t i) { per[i] = rouge_l_pair(nlg_tokens(cands[i]), nlg_tokens(refs[i])); });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

// Suffix stripper used for METEOR's stem stage.
inline std::string simple_stem(std::string w) {
  auto ends = [&](std::string_view suf) {
    return w.size() >= suf.size() + 3 && std::string_view(w).substr(w.size() - suf.size()) == suf;
  };
  if (ends("ies")) return w.substr(0, w.size() - 3) + "y";
  for (std::string_view suf : {"ing", "ed", "es", "ly", "s"})
    if (ends(suf)) return w.substr(0, w.size() - suf.size());
  return w;
}

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

// Exact, then stem, unigram alignment. Among equal-word reference positions
// the one continuing the previous token's alignment is preferred, else the leftmost.
inline std::vector<std::pair<std::size_t, std::size_t>> meteor_align(const std::vector<std::string>& c,
                                                                     const std::vector<std::string>& r) {
  std::vector<long> align(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  auto stage = [&](auto&& same) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (align[i] >= 0) continue;
      long want = (i > 0 && align[i - 1] >= 0) ? align[i - 1] + 1 : -1;
      long pick = -1;
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (used[j] || !same(c[i], r[j])) continue;
        if (static_cast<long>(j) == want) {
          pick = static_cast<long>(j);
          break;
        }
        if (pick < 0) pick = static_cast<long>(j);
      }
      if (pick >= 0) {
        align[i] = pick;
        used[static_cast<std::size_t>(pick)] = true;
      }
    }
  };
  stage([](const std::string& a, const std::string& b) { return a == b; });
  stage([](const std::string& a, const std::string& b) { return simple_stem(a) == simple_stem(b); });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (align[i] >= 0) out.emplace_back(i, static_cast<std::size_t>(align[i]));
  return out;
}

inline double meteor_pair(const std::vector<std::string>& c, const std::vector<std::string>& r,
                          const MeteorParams& mp = {}) {
  auto al = meteor_align(c, r);
  if (al.empty()) return 0.0;
  double m = static_cast<double>(al.size());
  double p = m / static_cast<double>(c.size());
  double rec = m / static_cast<double>(r.size());
  double fmean = p * rec / (mp.alpha * p + (1 - mp.alpha) * rec);
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < al.size(); ++k)
    if (al[k].first != al[k - 1].first + 1 || al[k].second != al[k - 1].second + 1) ++chunks;
  // As in the reference scorer, a complete single-chunk match carries no fragmentation penalty.
  if (chunks == 1 && al.size() == c.size() && al.size() == r.size()) return fmean;
  double pen = mp.gamma * std::pow(static_cast<double>(chunks) / m, mp.beta);
  return fmean * (1 - pen);
}

// Mean per-pair METEOR-lite.
inline double meteor_lite(const std::vector<std::string>& cands, const std::vector<std::string>& refs,
                          unsigned jobs = 1) {
  detail::check_aligned(cands.size(), refs.size());
  if (cands.empty()) return 0.0;
  std::vector<double> per(cands.size());
  parallel_for(cands.size(), jobs,
               [&](std::size_t i) { per[i] = meteor_pair(nlg_tokens(cands[i]), nlg_tokens(refs[i])); });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

// CIDEr: TF-IDF n-gram vectors (n = 1..4), document frequency over the
// references, per-n cosine averaged and scaled by 10, then averaged over pairs.
inline double cider(const std::vector<std::string>& cands, const std::vector<std::string>& refs, unsigned jobs = 1) {
  detail::check_aligned(cands.size(), refs.size());
  if (cands.empty()) return 0.0;
  using Counts = std::map<std::vector<std::string>, std::size_t>;
  const std::size_t n_docs = refs.size();
  std::vector<std::array<Counts, 4>> ref_counts(n_docs), cand_counts(n_docs);
  parallel_for(n_docs, jobs, [&](std::size_t i) {
    auto c = nlg_tokens(cands[i]);
    auto r = nlg_tokens(refs[i]);
    for (std::size_t n = 0; n < 4; ++n) {
      cand_counts[i][n] = detail::ngram_counts(c, n + 1);
      ref_counts[i][n] = detail::ngram_counts(r, n + 1);
    }
  });
  std::array<std::map<std::vector<std::string>, std::size_t>, 4> df;
  for (const auto& rc : ref_counts)
    for (std::size_t n = 0; n < 4; ++n)
      for (const auto& [g, _] : rc[n]) ++df[n][g];
  const double log_n = std::log(static_cast<double>(n_docs));
  auto idf = [&](std::size_t n, const std::vector<std::string>& g) {
    auto it = df[n].find(g);
    double d = it == df[n].end() ? 1.0 : static_cast<double>(it->second);
    return log_n - std::log(std::max(1.0, d));
  };
  std::vector<double> per(n_docs);
  parallel_for(n_docs, jobs, [&](std::size_t i) {
    double sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      double dot = 0, nc = 0, nr = 0;
      for (const auto& [g, k] : cand_counts[i][n]) {
        double w = static_cast<double>(k) * idf(n, g);
        nc += w * w;
        auto it = ref_counts[i][n].find(g);
        if (it != ref_counts[i][n].end()) dot += w * static_cast<double>(it->second) * idf(n, g);
      }
      for (const auto& [g, k] : ref_counts[i][n]) {
        double w = static_cast<double>(k) * idf(n, g);
        nr += w * w;
      }
      if (nc > 0 && nr > 0) sum += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
    per[i] = 10.0 * sum / 4.0;
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(n_docs);
}

// ---------------------------------------------------------------------------
// Batch evaluation

struct MetricReport {
  std::optional<double> auc_weighted;
  std::vector<std::optional<double>> auc_per_pathology;
  std::vector<std::size_t> auc_support;
  std::optional<double> clev;
  std::optional<double> bleu1, bleu2, bleu3, bleu4;
  std::optional<double> rouge_l;
  std::optional<double> meteor;
  std::optional<double> cider;
  std::optional<double> spice;
  std::optional<double> bertscore;
  std::size_t n_pairs_total = 0;
  std::size_t n_pairs_scored = 0;
  std::size_t dropped_missing_prediction = 0;
  std::size_t dropped_unknown_pathology = 0;
  std::size_t clev_unlabeled = 0;
  PathologyList pathologies = kDefaultPathologies;
  double threshold = 0.5;
};

struct EvaluateOptions {
  double threshold = 0.5;
  PathologyList pathologies = kDefaultPathologies;
  const Labeler* clev_labeler = nullptr; // required
  unsigned jobs = 1;
};

inline std::vector<EvalPair> read_eval_pairs(std::istream& in, const std::string& source) {
  std::vector<EvalPair> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    std::string where = source + ":" + std::to_string(n);
    try {
      auto j = nlohmann::json::parse(line);
      EvalPair p;
      p.image_id = j.at("image_id").get<std::string>();
      auto l = parse_label(j.at("diagnosis").get<std::string>());
      if (!l) throw DataError(where + ": unknown diagnosis label");
      p.diagnosis = *l;
      p.gt_nle = j.at("gt_nle").get<std::string>();
      p.gen_nle = j.at("gen_nle").get<std::string>();
      p.gt_binary = j.at("gt_binary").get<bool>();
      if (j.contains("pred_score")) p.pred_score = j["pred_score"].get<double>();
      if (j.contains("spice") && !j["spice"].is_null()) p.spice = j["spice"].get<double>();
      if (j.contains("bertscore") && !j["bertscore"].is_null()) p.bertscore = j["bertscore"].get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

// Columns: image_id, negative_0..9, uncertain_0..9, positive_0..9 (any order).
inline std::map<std::string, PredictionMatrix> read_predictions(std::istream& in, const std::string& source) {
  std::map<std::string, PredictionMatrix> out;
  auto t = csv::Table::read(in, source);
  if (t.header().empty()) return out;
  auto id = t.column("image_id");
  if (!id) throw DataError(source + ": missing image_id column");
  static constexpr std::array<std::string_view, 3> kPrefix = {"negative_", "uncertain_", "positive_"};
  std::array<std::array<std::size_t, kNumPathologies>, 3> cols{};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < kNumPathologies; ++p) {
      auto name = std::string(kPrefix[c]) + std::to_string(p);
      auto col = t.column(name);
      if (!col) throw DataError(source + ": missing column " + name);
      cols[c][p] = *col;
    }
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    const auto& row = t.rows()[r];
    std::string where = source + ": row " + std::to_string(t.line_of(r));
    PredictionMatrix m;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < kNumPathologies; ++p) {
        const std::string& cell = row[cols[c][p]];
        try {
          std::size_t used = 0;
          m.scores[c][p] = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::logic_error&) {
          throw DataError(where + ": bad score '" + cell + "'");
        }
      }
    m.validate(where);
    std::string key(text::trim(row[*id]));
    if (!out.emplace(key, m).second) throw DataError(where + ": duplicate image_id " + key);
  }
  return out;
}

// Per-image GT label states: image_id then label-name columns, cells blank/0/-1/1.
inline std::map<std::string, LabelState> read_gt_labels(std::istream& in, const std::string& source) {
  std::map<std::string, LabelState> out;
  auto t = csv::Table::read(in, source);
  if (t.header().empty()) return out;
  if (t.header()[0] != "image_id") throw DataError(source + ": first column must be image_id");
  auto lc = detail::label_columns(t, source, 1);
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    auto st = detail::decode_row(t.rows()[r], lc, source, t.line_of(r));
    if (!out.emplace(std::string(text::trim(t.rows()[r][0])), st).second)
      throw DataError(source + ": duplicate image_id in row " + std::to_string(t.line_of(r)));
  }
  return out;
}

// Without an explicit GT table, an image's GT for a pathology is positive iff
// some eval row for that (image, diagnosis) has gt_binary = true.
inline std::map<std::string, LabelState> gt_from_pairs(const std::vector<EvalPair>& pairs) {
  std::map<std::string, LabelState> out;
  for (const auto& p : pairs) {
    auto& st = out[p.image_id];
    if (p.gt_binary) st.set(p.diagnosis, Certainty::Positive);
  }
  return out;
}

inline MetricReport evaluate(std::vector<EvalPair> pairs, const std::map<std::string, PredictionMatrix>& preds,
                             const std::optional<std::map<std::string, LabelState>>& gt_labels,
                             const EvaluateOptions& opt) {
  if (!opt.clev_labeler) throw std::invalid_argument("evaluate: CLEV labeler is required");
  MetricReport rep;
  rep.pathologies = opt.pathologies;
  rep.threshold = opt.threshold;
  rep.n_pairs_total = pairs.size();

  const auto gt = gt_labels ? *gt_labels : gt_from_pairs(pairs);
  std::vector<std::pair<PredictionMatrix, LabelState>> auc_input;
  for (const auto& [image, state] : gt)
    if (auto it = preds.find(image); it != preds.end()) auc_input.emplace_back(it->second, state);
  auto wa = weighted_auc(auc_input, opt.pathologies);
  rep.auc_weighted = wa.value;
  rep.auc_per_pathology = wa.per_pathology;
  rep.auc_support = wa.support;

  std::vector<EvalPair> usable;
  for (auto& p : pairs) {
    auto it = preds.find(p.image_id);
    if (it == preds.end()) {
      ++rep.dropped_missing_prediction;
      continue;
    }
    auto idx = pathology_index(opt.pathologies, p.diagnosis);
    if (!idx) {
      ++rep.dropped_unknown_pathology;
      continue;
    }
    p.pred_score = it->second.binary_score(*idx);
    usable.push_back(std::move(p));
  }
  auto scored = filter_correct(usable, opt.threshold);
  rep.n_pairs_scored = scored.size();
  if (scored.empty()) return rep;

  std::size_t missing_before = opt.clev_labeler->missing_count();
  rep.clev = clev(scored, *opt.clev_labeler);
  rep.clev_unlabeled = opt.clev_labeler->missing_count() - missing_before;

  std::vector<std::string> cands, refs;
  for (const auto& p : scored) {
    cands.push_back(p.gen_nle);
    refs.push_back(p.gt_nle);
  }
  auto b = bleu(cands, refs);
  rep.bleu1 = b[0];
  rep.bleu2 = b[1];
  rep.bleu3 = b[2];
  rep.bleu4 = b[3];
  rep.rouge_l = rouge_l(cands, refs, opt.jobs);
  rep.meteor = meteor_lite(cands, refs, opt.jobs);
  rep.cider = cider(cands, refs, opt.jobs);

  auto mean_of = [&](auto field) -> std::optional<double> {
    double sum = 0;
    std::size_t k = 0;
    for (const auto& p : scored)
      if (auto v = p.*field) {
        sum += *v;
        ++k;
      }
    if (k == 0) return std::nullopt;
    return sum / static_cast<double>(k);
  };
  rep.spice = mean_of(&EvalPair::spice);
  rep.bertscore = mean_of(&EvalPair::bertscore);
  return rep;
}

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["auc_weighted"] = opt(r.auc_weighted);
  auto per = nlohmann::ordered_json::array();
  for (std::size_t p = 0; p < r.auc_per_pathology.size(); ++p)
    per.push_back({{"pathology", label_name(r.pathologies[p])},
                   {"auc", opt(r.auc_per_pathology[p])},
                   {"support", r.auc_support[p]}});
  j["auc_per_pathology"] = std::move(per);
  j["clev"] = opt(r.clev);
  j["bleu1"] = opt(r.bleu1);
  j["bleu2"] = opt(r.bleu2);
  j["bleu3"] = opt(r.bleu3);
  j["bleu4"] = opt(r.bleu4);
  j["rouge_l"] = opt(r.rouge_l);
  j["meteor"] = opt(r.meteor);
  j["cider"] = opt(r.cider);
  j["spice"] = opt(r.spice);
  j["bertscore"] = opt(r.bertscore);
  j["n_pairs_total"] = r.n_pairs_total;
  j["n_pairs_scored"] = r.n_pairs_scored;
  j["dropped_missing_prediction"] = r.dropped_missing_prediction;
  j["dropped_unknown_pathology"] = r.dropped_unknown_pathology;
  j["clev_unlabeled"] = r.clev_unlabeled;
  j["threshold"] = r.threshold;
  return j;
}

inline std::string report_table(const MetricReport& r) {
  std::ostringstream os;
  auto row = [&](const char* name, const std::optional<double>& v) {
    char buf[64];
    if (v)
      std::snprintf(buf, sizeof buf, "%-12s %10.4f\n", name, *v);
    else
      std::snprintf(buf, sizeof buf, "%-12s %10s\n", name, "n/a");
    os << buf;
  };
  row("AUC (S_T)", r.auc_weighted);
  row("CLEV", r.clev);
  row("BLEU-1", r.bleu1);
  row("BLEU-2", r.bleu2);
  row("BLEU-3", r.bleu3);
  row("BLEU-4", r.bleu4);
  row("ROUGE-L", r.rouge_l);
  row("METEOR-lite", r.meteor);
  row("CIDEr", r.cider);
  row("SPICE", r.spice);
  row("BERTScore", r.bertscore);
  os << "pairs scored " << r.n_pairs_scored << " of " << r.n_pairs_total << '\n';
  return os.str();
}

} // namespace cxrnle
