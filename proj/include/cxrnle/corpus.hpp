#pragma once

#include <cxrnle/csv.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/parallel.hpp>
#include <cxrnle/text.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace cxrnle {

enum class Split { Train, Dev, Test, Unassigned };
enum class ViewPosition { AP, PA, Lateral, Other };

inline constexpr std::array<std::string_view, 4> kSplitNames = {"train", "dev", "test", "unassigned"};
inline constexpr std::array<std::string_view, 4> kViewNames = {"AP", "PA", "LATERAL", "OTHER"};

constexpr std::string_view split_name(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }
constexpr std::string_view view_name(ViewPosition v) { return kViewNames[static_cast<std::size_t>(v)]; }
constexpr bool is_frontal(ViewPosition v) { return v == ViewPosition::AP || v == ViewPosition::PA; }

// MIMIC-CXR writes "validate" for the dev split.
inline std::optional<Split> parse_split(std::string_view s) {
  std::string v = text::to_lower(text::trim(s));
  if (v == "train") return Split::Train;
  if (v == "dev" || v == "validate" || v == "validation" || v == "val") return Split::Dev;
  if (v == "test") return Split::Test;
  if (v == "unassigned" || v.empty()) return Split::Unassigned;
  return std::nullopt;
}

// "LL" and "RL" are the lateral codes used in the MIMIC-CXR metadata.
inline ViewPosition parse_view(std::string_view s) {
  std::string v = text::to_lower(text::trim(s));
  if (v == "ap") return ViewPosition::AP;
  if (v == "pa") return ViewPosition::PA;
  if (v == "lateral" || v == "lat" || v == "ll" || v == "rl") return ViewPosition::Lateral;
  return ViewPosition::Other;
}

struct ImageMeta {
  std::string image_id;
  ViewPosition view_position = ViewPosition::Other;
};

struct StudyMeta {
  std::string subject_id;
  std::string study_id;
  std::vector<ImageMeta> images; // sorted by image_id
  Split split = Split::Unassigned;
};

struct Report {
  StudyMeta meta;
  std::string raw_text;
  std::optional<std::string> findings;
  std::optional<std::string> impression;

  bool skipped() const { return !findings && !impression; }
};

struct IngestError {
  std::string subject_id;
  std::string study_id;
  std::string reason; // "unreadable" | "no_sections"
  std::string detail;
};

struct Corpus {
  std::vector<Report> reports; // sorted by (subject_id, study_id)
  std::vector<IngestError> errors;
};

// ---------------------------------------------------------------------------
// Section extraction

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct SectionSpans {
  std::optional<Span> findings;
  std::optional<Span> impression;
};

namespace detail {

enum class Header { Findings, Impression, Comparison, Indication, Technique, History };

inline constexpr std::array<std::pair<std::string_view, Header>, 6> kHeaders = {{
    {"FINDINGS", Header::Findings},
    {"IMPRESSION", Header::Impression},
    {"COMPARISON", Header::Comparison},
    {"INDICATION", Header::Indication},
    {"TECHNIQUE", Header::Technique},
    {"HISTORY", Header::History},
}};

struct HeaderHit {
  Header kind;
  std::size_t start;   // first character of the header word
  std::size_t content; // just past the colon
};

// A header is a known word followed by optional blanks and ':'. It is
// recognized case-insensitively at the start of a line, or mid-line when
// written in upper case after whitespace.
inline std::vector<HeaderHit> scan_headers(std::string_view raw) {
  std::vector<HeaderHit> hits;
  bool line_start = true;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\n') {
      line_start = true;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') continue;
    bool after_space = i > 0 && text::is_space(raw[i - 1]);
    bool at_line_start = line_start;
    line_start = false;
    if (!text::is_alpha(c) || (!at_line_start && !after_space)) continue;
    for (auto [word, kind] : kHeaders) {
      std::string_view rest = raw.substr(i);
      bool match = at_line_start ? text::starts_with_ci(rest, word) : rest.substr(0, word.size()) == word;
      if (!match) continue;
      std::size_t j = i + word.size();
      while (j < raw.size() && (raw[j] == ' ' || raw[j] == '\t')) ++j;
      if (j < raw.size() && raw[j] == ':') {
        hits.push_back({kind, i, j + 1});
        i = j;
        break;
      }
    }
  }
  return hits;
}

} // namespace detail

inline SectionSpans locate_sections(std::string_view raw) {
  SectionSpans out;
  auto hits = detail::scan_headers(raw);
  for (std::size_t h = 0; h < hits.size(); ++h) {
    std::optional<Span>* slot = nullptr;
    if (hits[h].kind == detail::Header::Findings) slot = &out.findings;
    if (hits[h].kind == detail::Header::Impression) slot = &out.impression;
    if (!slot || *slot) continue;
    std::size_t begin = hits[h].content;
    std::size_t end = h + 1 < hits.size() ? hits[h + 1].start : raw.size();
    while (begin < end && text::is_space(raw[begin])) ++begin;
    while (end > begin && text::is_space(raw[end - 1])) --end;
    if (end > begin) *slot = Span{begin, end};
  }
  return out;
}

inline std::pair<std::optional<std::string>, std::optional<std::string>>
extract_sections(std::string_view raw) {
  auto spans = locate_sections(raw);
  auto take = [&](const std::optional<Span>& s) -> std::optional<std::string> {
    if (!s) return std::nullopt;
    return std::string(raw.substr(s->begin, s->size()));
  };
  return {take(spans.findings), take(spans.impression)};
}

// ---------------------------------------------------------------------------
// Corpus loading

struct CorpusPaths {
  std::filesystem::path report_root; // <root>/.../p<subject>/s<study>.txt
  std::filesystem::path metadata;    // optional
  std::filesystem::path splits;      // optional
  std::filesystem::path manifest;    // optional; replaces the directory scan
};

namespace detail {

inline std::string strip_prefix_id(std::string_view s, char prefix) {
  s = text::trim(s);
  if (s.size() > 1 && text::to_lower(s[0]) == prefix && text::is_digit(s[1])) s.remove_prefix(1);
  return std::string(s);
}

struct StudyFile {
  std::string subject_id;
  std::string study_id;
  std::filesystem::path path;
};

inline std::vector<StudyFile> scan_report_root(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<StudyFile> out;
  if (!fs::exists(root)) throw DataError("report root does not exist: " + root.string());
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    const auto& p = it->path();
    if (p.extension() != ".txt") continue;
    std::error_code ec;
    if (fs::is_directory(it->symlink_status(ec))) continue;
    StudyFile f;
    f.study_id = strip_prefix_id(p.stem().string(), 's');
    auto rel = p.lexically_relative(root);
    bool top_level = std::distance(rel.begin(), rel.end()) <= 1;
    f.subject_id = top_level ? "" : strip_prefix_id(p.parent_path().filename().string(), 'p');
    f.path = p;
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<StudyFile> read_manifest(const std::filesystem::path& manifest) {
  auto table = csv::Table::read_file(manifest.string());
  auto study = table.column("study_id");
  auto path = table.column("path");
  if (!study || !path) throw DataError(manifest.string() + ": manifest needs study_id and path columns");
  auto subject = table.column("subject_id");
  std::vector<StudyFile> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto& row = table.rows()[r];
    if (text::trim(row[*study]).empty())
      throw DataError(manifest.string() + ": empty study_id in row " + std::to_string(table.line_of(r)));
    std::filesystem::path p = row[*path];
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back({subject ? strip_prefix_id(row[*subject], 'p') : "", strip_prefix_id(row[*study], 's'), p});
  }
  return out;
}

inline bool read_file(const std::filesystem::path& p, std::string& out, std::string& why) {
  std::error_code ec;
  if (std::filesystem::is_directory(p, ec)) {
    why = p.string() + " is a directory";
    return false;
  }
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    why = "cannot open " + p.string();
    return false;
  }
  out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (in.bad()) {
    why = "read failure on " + p.string();
    return false;
  }
  return true;
}

} // namespace detail

// image metadata keyed by study_id.
struct ImageIndex {
  std::map<std::string, std::vector<ImageMeta>> images;
  std::map<std::string, std::string> subjects;
};

inline ImageIndex read_metadata(const std::filesystem::path& path) {
  ImageIndex idx;
  auto table = csv::Table::read_file(path.string());
  auto image = table.column_any({"image_id", "dicom_id"});
  auto study = table.column("study_id");
  auto view = table.column_any({"view_position", "ViewPosition"});
  auto subject = table.column("subject_id");
  if (!image || !study || !view)
    throw DataError(path.string() + ": metadata needs image_id, study_id and view_position columns");
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto& row = table.rows()[r];
    std::string sid = detail::strip_prefix_id(row[*study], 's');
    std::string iid(text::trim(row[*image]));
    if (sid.empty() || iid.empty())
      throw DataError(path.string() + ": empty image_id or study_id in row " + std::to_string(table.line_of(r)));
    auto& list = idx.images[sid];
    for (const auto& existing : list)
      if (existing.image_id == iid)
        throw DataError(path.string() + ": duplicate image_id " + iid + " in row " + std::to_string(table.line_of(r)));
    list.push_back({iid, parse_view(row[*view])});
    if (subject) idx.subjects[sid] = detail::strip_prefix_id(row[*subject], 'p');
  }
  for (auto& [_, list] : idx.images)
    std::sort(list.begin(), list.end(), [](const ImageMeta& a, const ImageMeta& b) { return a.image_id < b.image_id; });
  return idx;
}

// Accepts per-study rows or the per-image MIMIC split file (same split repeated).
inline std::map<std::string, Split> read_splits(const std::filesystem::path& path) {
  std::map<std::string, Split> out;
  auto table = csv::Table::read_file(path.string());
  auto study = table.column("study_id");
  auto split = table.column("split");
  if (!study || !split) throw DataError(path.string() + ": split file needs study_id and split columns");
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto& row = table.rows()[r];
    std::string line = std::to_string(table.line_of(r));
    std::string sid = detail::strip_prefix_id(row[*study], 's');
    if (sid.empty()) throw DataError(path.string() + ": empty study_id in row " + line);
    auto s = parse_split(row[*split]);
    if (!s) throw DataError(path.string() + ": unknown split '" + row[*split] + "' in row " + line);
    auto [it, inserted] = out.emplace(sid, *s);
    if (!inserted && it->second != *s)
      throw DataError(path.string() + ": conflicting split for study " + sid + " in row " + line);
  }
  return out;
}

inline Corpus load_corpus(const CorpusPaths& paths, unsigned jobs = 1) {
  auto files = paths.manifest.empty() ? detail::scan_report_root(paths.report_root)
                                      : detail::read_manifest(paths.manifest);
  ImageIndex images;
  if (!paths.metadata.empty()) images = read_metadata(paths.metadata);
  std::map<std::string, Split> splits;
  if (!paths.splits.empty()) splits = read_splits(paths.splits);

  for (auto& f : files)
    if (f.subject_id.empty())
      if (auto it = images.subjects.find(f.study_id); it != images.subjects.end()) f.subject_id = it->second;

  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.study_id) < std::tie(b.subject_id, b.study_id);
  });
  {
    std::map<std::string, std::size_t> seen;
    for (const auto& f : files)
      if (++seen[f.study_id] > 1) throw DataError("duplicate study_id " + f.study_id);
  }

  struct Slot {
    std::optional<Report> report;
    std::optional<IngestError> error;
  };
  std::vector<Slot> slots(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const auto& f = files[i];
    std::string raw, why;
    if (!detail::read_file(f.path, raw, why)) {
      slots[i].error = IngestError{f.subject_id, f.study_id, "unreadable", why};
      return;
    }
    Report r;
    r.meta.subject_id = f.subject_id;
    r.meta.study_id = f.study_id;
    if (auto it = images.images.find(f.study_id); it != images.images.end()) r.meta.images = it->second;
    if (auto it = splits.find(f.study_id); it != splits.end()) r.meta.split = it->second;
    auto [fi, im] = extract_sections(raw);
    r.raw_text = std::move(raw);
    r.findings = std::move(fi);
    r.impression = std::move(im);
    if (r.skipped()) slots[i].error = IngestError{f.subject_id, f.study_id, "no_sections", "neither FINDINGS nor IMPRESSION found"};
    slots[i].report = std::move(r);
  });

  Corpus corpus;
  for (auto& s : slots) {
    if (s.report) corpus.reports.push_back(std::move(*s.report));
    if (s.error) corpus.errors.push_back(std::move(*s.error));
  }
  return corpus;
}

inline void write_ingest_errors(const std::filesystem::path& file, const std::vector<IngestError>& errors) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  csv::write_row(out, {"subject_id", "study_id", "reason", "detail"});
  for (const auto& e : errors) csv::write_row(out, {e.subject_id, e.study_id, e.reason, e.detail});
  if (!out) throw DataError("write failure on " + file.string());
}

} // namespace cxrnle
