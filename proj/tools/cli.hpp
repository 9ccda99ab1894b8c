#pragma once

// Command-line front end. Kept in a header so the tests can drive it in-process.

#include <cxrnle/cxrnle.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

namespace cxrnle::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kAudit = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// stderr logger; level 0 = warnings only, 1 = info (-v), 2 = debug (-vv).
class Log {
public:
  Log(std::ostream& err, int level) : err_(err), level_(level) {}
  void warn(const std::string& m) const { err_ << "warning: " << m << '\n'; }
  void info(const std::string& m) const {
    if (level_ >= 1) err_ << "info: " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (level_ >= 2) err_ << "debug: " << m << '\n';
  }

private:
  std::ostream& err_;
  int level_;
};

// Flag value if given on the command line, else config value, else fallback.
template <typename T>
T merged(const CLI::Option* flag, const T& flag_value, const config::Document& doc, const char* section,
         const char* key, T fallback) {
  if (flag && flag->count() > 0) return flag_value;
  if constexpr (std::is_same_v<T, unsigned>) {
    if (auto v = doc.get_in<double>(section, key)) {
      if (*v < 0 || *v != static_cast<double>(static_cast<unsigned>(*v)))
        throw DataError(std::string("config ") + key + " must be a non-negative integer");
      return static_cast<unsigned>(*v);
    }
  } else if constexpr (std::is_same_v<T, double>) {
    if (auto v = doc.get_in<double>(section, key)) return *v;
  } else {
    if (auto v = doc.get_in<T>(section, key)) return *v;
  }
  return fallback;
}

inline unsigned resolve_jobs(unsigned jobs) {
  if (jobs > 0) return jobs;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

inline MentionLexicon mention_lexicon_from(const std::string& path, const config::Document& doc) {
  if (!path.empty()) return load_mention_lexicon(config::Document::load(path));
  return load_mention_lexicon(doc);
}

inline KeywordLexicon keyword_lexicon_from(const std::string& path, const config::Document& doc) {
  if (!path.empty()) return load_keyword_lexicon(config::Document::load(path));
  return load_keyword_lexicon(doc);
}

inline void print_histogram(std::ostream& out, const char* title, const nlohmann::json& arr, const char* key,
                            std::size_t top) {
  out << title << '\n';
  std::size_t total = 0;
  for (const auto& row : arr) total += row.at("count").get<std::size_t>();
  std::size_t shown = 0;
  for (const auto& row : arr) {
    if (top && shown++ >= top) break;
    std::string name;
    if (row.at(key).is_array()) {
      std::vector<std::string> parts;
      for (const auto& p : row.at(key)) parts.push_back(p.get<std::string>());
      name = text::join(parts, ", ");
    } else {
      name = row.at(key).get<std::string>();
    }
    auto n = row.at("count").get<std::size_t>();
    char buf[48];
    std::snprintf(buf, sizeof buf, "%8zu %6.1f%%  ", n, total ? 100.0 * static_cast<double>(n) / total : 0.0);
    out << buf << name << '\n';
  }
  out << '\n';
}

inline void print_stats(std::ostream& out, const nlohmann::json& j, std::size_t top) {
  if (j.value("schema_version", 0) != 1) throw DataError("unsupported stats schema_version");
  const auto& f = j.at("funnel");
  out << "Funnel\n";
  for (const char* k : {"sentences_total", "after_anonymized_filter", "after_nondescriptive_filter", "rule_matched",
                        "after_dedup", "after_frontal_restriction"}) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "  %-28s %10zu\n", k, f.at(k).get<std::size_t>());
    out << buf;
  }
  out << "\nFiltered sentences by reason\n";
  for (const auto& [k, v] : j.at("filtered_by_reason").items()) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "  %-28s %10zu\n", k.c_str(), v.get<std::size_t>());
    out << buf;
  }
  const auto& r = j.at("records");
  out << "\nRecords\n";
  out << "  image-NLE pairs              " << r.at("image_nle_pairs").get<std::size_t>() << '\n';
  out << "  image-diagnosis-NLE triplets " << r.at("image_diagnosis_nle_triplets").get<std::size_t>() << '\n';
  for (const auto& [k, v] : r.at("by_split").items()) out << "  " << k << ": " << v.get<std::size_t>() << '\n';
  out << '\n';
  print_histogram(out, "Diagnosis label combinations", j.at("diagnosis_combinations"), "labels", top);
  print_histogram(out, "Evidence label combinations", j.at("evidence_combinations"), "labels", top);
  print_histogram(out, "Explanation keywords", j.at("explanation_keywords"), "keyword", top);
}

inline void print_audit(std::ostream& out, const AuditReport& rep, const std::vector<RulePattern>& rules,
                        double seconds) {
  out << "inputs            " << rep.inputs << '\n';
  out << "matched none      " << rep.matched_none << '\n';
  out << "matched once      " << rep.matched_once << '\n';
  out << "matched multiple  " << rep.matched_multiple << '\n';
  out << "\nrule  inputs  pattern\n";
  for (const auto& r : rules) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-5s %6zu  ", r.name().c_str(), rep.per_rule.at(r.id));
    out << buf << describe(r) << '\n';
  }
  for (const auto& c : rep.conflicts) {
    out << "conflict:";
    for (Label l : kRuleLabels)
      if (c.state[l] != Certainty::Absent) out << ' ' << label_name(l) << '=' << certainty_name(c.state[l]);
    out << (c.has_kw ? " [kw]" : "") << " ->";
    for (int id : c.rules) out << " R" << id;
    out << '\n';
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "\n%s in %.3f s\n", rep.ok() ? "OK" : "FAILED", seconds);
  out << buf;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Extract and evaluate natural-language explanations from chest X-ray reports", "cxrnle"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.fallthrough();

  int verbosity = 0;
  std::string config_path;
  unsigned jobs_flag = 0;
  app.add_flag("-v,--verbose", verbosity, "More logging on stderr (repeatable)");
  app.add_option("--config", config_path, "TOML-style config file")->check(CLI::ExistingFile);
  auto* jobs_opt = app.add_option("-j,--jobs", jobs_flag, "Worker threads (0 = all cores)");

  // extract
  auto* ex = app.add_subcommand("extract", "Build NLE records from a report corpus");
  std::string ex_corpus, ex_metadata, ex_splits, ex_manifest, ex_out, ex_labeler = "builtin", ex_labels, ex_lexicon,
                                                                     ex_mention;
  bool ex_ignore_cert = false;
  auto* o_corpus = ex->add_option("--corpus", ex_corpus, "Report root (p<subject>/s<study>.txt)");
  auto* o_meta = ex->add_option("--metadata", ex_metadata, "Image metadata CSV");
  auto* o_splits = ex->add_option("--splits", ex_splits, "Study split CSV");
  auto* o_manifest = ex->add_option("--manifest", ex_manifest, "Study manifest CSV (study_id,path)");
  auto* o_out = ex->add_option("--out", ex_out, "Output directory");
  auto* o_labeler = ex->add_option("--labeler", ex_labeler, "Sentence labeler")->check(CLI::IsMember({"builtin", "external"}));
  auto* o_labels = ex->add_option("--labels-file", ex_labels, "Per-sentence label CSV for --labeler external");
  auto* o_lex = ex->add_option("--lexicon", ex_lexicon, "Keyword lexicon file");
  auto* o_mention = ex->add_option("--mention-lexicon", ex_mention, "Mention lexicon file");
  auto* o_ign = ex->add_flag("--dedup-ignore-certainty", ex_ignore_cert, "Drop certainty from the dedup key");

  // stats
  auto* st = app.add_subcommand("stats", "Print tables from stats.json");
  std::string st_in;
  std::size_t st_top = 0;
  st->add_option("input", st_in, "stats.json or an extract output directory")->required();
  st->add_option("--top", st_top, "Rows per histogram (0 = all)");

  // label
  auto* lb = app.add_subcommand("label", "Run the built-in mention labeler");
  std::string lb_corpus, lb_manifest, lb_text, lb_input, lb_out, lb_mention;
  auto* o_lb_corpus = lb->add_option("--corpus", lb_corpus, "Label every sentence of a corpus");
  auto* o_lb_manifest = lb->add_option("--manifest", lb_manifest, "Study manifest CSV");
  auto* o_lb_text = lb->add_option("--text", lb_text, "Label one sentence");
  auto* o_lb_input = lb->add_option("--input", lb_input, "Label each line of a file");
  lb->add_option("--out", lb_out, "Output CSV (default stdout)");
  auto* o_lb_mention = lb->add_option("--mention-lexicon", lb_mention, "Mention lexicon file");

  // audit-rules
  auto* au = app.add_subcommand("audit-rules", "Check that no label state matches two rules");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score generated NLEs and predictions");
  std::string ev_eval, ev_pred, ev_out, ev_clev = "builtin", ev_clev_labels, ev_paths, ev_gt, ev_mention;
  double ev_threshold = 0.5;
  auto* o_eval = ev->add_option("--eval", ev_eval, "Eval pairs JSONL");
  auto* o_pred = ev->add_option("--pred", ev_pred, "Prediction CSV");
  ev->add_option("--out", ev_out, "Report JSON path (default stdout)");
  auto* o_thr = ev->add_option("--threshold", ev_threshold, "Correct-prediction threshold");
  auto* o_clev = ev->add_option("--clev-labeler", ev_clev, "Labeler for CLEV")->check(CLI::IsMember({"builtin", "external"}));
  auto* o_clev_labels = ev->add_option("--clev-labels", ev_clev_labels, "Text-keyed label CSV for --clev-labeler external");
  auto* o_paths = ev->add_option("--pathologies", ev_paths, "Comma-separated list of the 10 pathologies");
  auto* o_gt = ev->add_option("--gt-labels", ev_gt, "Per-image GT label CSV for the AUC");
  auto* o_ev_mention = ev->add_option("--mention-lexicon", ev_mention, "Mention lexicon file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    err << app.help();
    return kUsage;
  }

  Log log(err, verbosity);
  try {
    config::Document doc;
    if (!config_path.empty()) doc = config::Document::load(config_path);
    unsigned jobs = resolve_jobs(merged<unsigned>(jobs_opt, jobs_flag, doc, "pipeline", "jobs", 0));
    log.debug("jobs = " + std::to_string(jobs));

    if (ex->parsed()) {
      auto corpus_dir = merged<std::string>(o_corpus, ex_corpus, doc, "pipeline", "corpus", "");
      auto manifest = merged<std::string>(o_manifest, ex_manifest, doc, "pipeline", "manifest", "");
      auto out_dir = merged<std::string>(o_out, ex_out, doc, "pipeline", "out", "");
      if (corpus_dir.empty() && manifest.empty()) throw UsageError("extract: --corpus is required");
      if (out_dir.empty()) throw UsageError("extract: --out is required");
      CorpusPaths paths;
      paths.report_root = corpus_dir;
      paths.manifest = manifest;
      paths.metadata = merged<std::string>(o_meta, ex_metadata, doc, "pipeline", "metadata", "");
      paths.splits = merged<std::string>(o_splits, ex_splits, doc, "pipeline", "splits", "");
      if (!corpus_dir.empty() && manifest.empty() && !std::filesystem::is_directory(corpus_dir))
        throw DataError("corpus directory not found: " + corpus_dir);
      if (paths.metadata.empty()) log.warn("no --metadata: studies have no images, so no records are emitted");

      auto labeler_kind = merged<std::string>(o_labeler, ex_labeler, doc, "pipeline", "labeler", "builtin");
      if (labeler_kind != "builtin" && labeler_kind != "external")
        throw UsageError("extract: --labeler must be builtin or external");
      auto labels_file = merged<std::string>(o_labels, ex_labels, doc, "pipeline", "labels_file", "");
      std::unique_ptr<Labeler> labeler;
      if (labeler_kind == "external") {
        if (labels_file.empty()) throw UsageError("extract: --labeler external needs --labels-file");
        labeler = std::make_unique<ExternalLabeler>(load_external_labels(labels_file));
      } else {
        labeler = std::make_unique<BuiltinLabeler>(
            mention_lexicon_from(merged<std::string>(o_mention, ex_mention, doc, "pipeline", "mention_lexicon", ""), doc));
      }

      PipelineOptions opt;
      opt.keywords = keyword_lexicon_from(merged<std::string>(o_lex, ex_lexicon, doc, "pipeline", "lexicon", ""), doc);
      opt.labeler = labeler.get();
      opt.jobs = jobs;
      opt.dedup_ignore_certainty = merged<bool>(o_ign, ex_ignore_cert, doc, "pipeline", "dedup_ignore_certainty", false);

      auto t0 = std::chrono::steady_clock::now();
      Corpus corpus = load_corpus(paths, jobs);
      log.info("loaded " + std::to_string(corpus.reports.size()) + " reports, " +
               std::to_string(corpus.errors.size()) + " ingest errors");
      auto res = run_pipeline(corpus, opt);
      write_outputs(out_dir, res, corpus.errors);
      auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (res.unlabeled_sentences > 0)
        log.warn(std::to_string(res.unlabeled_sentences) + " sentences had no entry in the labels file");
      log.info("wrote " + std::to_string(res.records.size()) + " records to " + out_dir + " in " +
               std::to_string(secs) + " s");
      return kOk;
    }

    if (st->parsed()) {
      std::filesystem::path p = st_in;
      if (std::filesystem::is_directory(p)) p /= "stats.json";
      std::ifstream in(p, std::ios::binary);
      if (!in) throw DataError("cannot open " + p.string());
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
        print_stats(out, j, st_top);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
      }
      return kOk;
    }

    if (lb->parsed()) {
      int modes = (o_lb_corpus->count() || o_lb_manifest->count()) + (o_lb_text->count() > 0) + (o_lb_input->count() > 0);
      if (modes != 1) throw UsageError("label: give exactly one of --corpus/--manifest, --text, --input");
      BuiltinLabeler labeler(mention_lexicon_from(
          merged<std::string>(o_lb_mention, lb_mention, doc, "pipeline", "mention_lexicon", ""), doc));
      std::ofstream file;
      if (!lb_out.empty()) {
        file.open(lb_out, std::ios::binary);
        if (!file) throw DataError("cannot write " + lb_out);
      }
      std::ostream& os = lb_out.empty() ? out : file;
      if (o_lb_text->count() || o_lb_input->count()) {
        std::vector<std::string> lines;
        if (o_lb_text->count()) {
          lines.push_back(lb_text);
        } else {
          std::ifstream in(lb_input, std::ios::binary);
          if (!in) throw DataError("cannot open " + lb_input);
          for (std::string line; std::getline(in, line);)
            if (!text::trim(line).empty()) lines.push_back(text::normalize_space(line));
        }
        csv::write_row(os, label_header({"text"}));
        for (const auto& l : lines) {
          Sentence s;
          s.text = text::normalize_space(l);
          csv::Row row{s.text};
          append_label_cells(row, labeler.label(s));
          csv::write_row(os, row);
        }
        return kOk;
      }
      CorpusPaths paths;
      paths.report_root = lb_corpus;
      paths.manifest = lb_manifest;
      if (!lb_corpus.empty() && lb_manifest.empty() && !std::filesystem::is_directory(lb_corpus))
        throw DataError("corpus directory not found: " + lb_corpus);
      Corpus corpus = load_corpus(paths, jobs);
      std::vector<std::vector<csv::Row>> rows(corpus.reports.size());
      parallel_for(corpus.reports.size(), jobs, [&](std::size_t i) {
        for (const auto& s : segment_report(corpus.reports[i], false)) {
          csv::Row row{s.study_id, std::string(section_name(s.section)), std::to_string(s.index), s.text};
          append_label_cells(row, labeler.label(s));
          rows[i].push_back(std::move(row));
        }
      });
      csv::write_row(os, label_header({"study_id", "section", "sentence_index", "text"}));
      for (const auto& per : rows)
        for (const auto& row : per) csv::write_row(os, row);
      return kOk;
    }

    if (au->parsed()) {
      auto t0 = std::chrono::steady_clock::now();
      auto rep = audit_exclusivity(builtin_rules());
      auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      print_audit(out, rep, builtin_rules(), secs);
      return rep.ok() ? kOk : kAudit;
    }

    if (ev->parsed()) {
      auto eval_path = merged<std::string>(o_eval, ev_eval, doc, "evaluate", "eval", "");
      auto pred_path = merged<std::string>(o_pred, ev_pred, doc, "evaluate", "pred", "");
      if (eval_path.empty() || pred_path.empty()) throw UsageError("evaluate: --eval and --pred are required");
      EvaluateOptions eo;
      eo.jobs = jobs;
      eo.threshold = merged<double>(o_thr, ev_threshold, doc, "evaluate", "threshold", 0.5);
      if (!(eo.threshold >= 0.0 && eo.threshold <= 1.0)) throw UsageError("evaluate: --threshold must be in [0,1]");
      if (o_paths->count()) {
        std::vector<std::string> names;
        std::stringstream ss(ev_paths);
        for (std::string n; std::getline(ss, n, ',');) names.push_back(n);
        eo.pathologies = parse_pathologies(names);
      } else if (auto list = doc.get_in<std::vector<std::string>>("evaluate", "pathologies")) {
        eo.pathologies = parse_pathologies(*list);
      }
      auto clev_kind = merged<std::string>(o_clev, ev_clev, doc, "evaluate", "clev_labeler", "builtin");
      auto clev_labels = merged<std::string>(o_clev_labels, ev_clev_labels, doc, "evaluate", "clev_labels", "");
      std::unique_ptr<Labeler> labeler;
      if (clev_kind == "external") {
        if (clev_labels.empty()) throw UsageError("evaluate: --clev-labeler external needs --clev-labels");
        labeler = std::make_unique<TextLabeler>(TextLabeler::load(clev_labels));
      } else if (clev_kind == "builtin") {
        labeler = std::make_unique<BuiltinLabeler>(mention_lexicon_from(
            merged<std::string>(o_ev_mention, ev_mention, doc, "pipeline", "mention_lexicon", ""), doc));
      } else {
        throw UsageError("evaluate: --clev-labeler must be builtin or external");
      }
      eo.clev_labeler = labeler.get();

      std::ifstream eval_in(eval_path, std::ios::binary);
      if (!eval_in) throw DataError("cannot open " + eval_path);
      auto pairs = read_eval_pairs(eval_in, eval_path);
      std::ifstream pred_in(pred_path, std::ios::binary);
      if (!pred_in) throw DataError("cannot open " + pred_path);
      auto preds = read_predictions(pred_in, pred_path);
      auto gt_path = merged<std::string>(o_gt, ev_gt, doc, "evaluate", "gt_labels", "");
      std::optional<std::map<std::string, LabelState>> gt;
      if (!gt_path.empty()) {
        std::ifstream gt_in(gt_path, std::ios::binary);
        if (!gt_in) throw DataError("cannot open " + gt_path);
        gt = read_gt_labels(gt_in, gt_path);
      }

      auto rep = evaluate(std::move(pairs), preds, gt, eo);
      if (rep.dropped_missing_prediction)
        log.warn(std::to_string(rep.dropped_missing_prediction) + " pairs dropped: no prediction for the image");
      if (rep.dropped_unknown_pathology)
        log.warn(std::to_string(rep.dropped_unknown_pathology) + " pairs dropped: diagnosis not in the pathology list");
      for (std::size_t p = 0; p < rep.auc_per_pathology.size(); ++p)
        if (!rep.auc_per_pathology[p])
          log.warn("AUC: " + std::string(label_name(rep.pathologies[p])) + " lacks positives or negatives, excluded");
      if (rep.clev_unlabeled) log.warn(std::to_string(rep.clev_unlabeled) + " NLEs missing from the CLEV label file");

      auto j = report_to_json(rep).dump(2);
      if (ev_out.empty()) {
        out << j << '\n';
      } else {
        std::ofstream f(ev_out, std::ios::binary);
        if (!f) throw DataError("cannot write " + ev_out);
        f << j << '\n';
        out << report_table(rep);
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n";
    for (auto* sub : app.get_subcommands())
      if (sub->parsed()) err << sub->help();
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

} // namespace cxrnle::cli
