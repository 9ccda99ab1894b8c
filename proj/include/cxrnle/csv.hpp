#pragma once

#include <cxrnle/labels.hpp>

#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cxrnle::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields, doubled quotes, CRLF, embedded newlines.
class Reader {
public:
  explicit Reader(std::istream& in, std::string source = "<csv>")
      : in_(in), source_(std::move(source)) {}

  // Reads the next record; returns false at end of input. Line numbers are 1-based.
  bool next(Row& row) {
    row.clear();
    int ch = in_.get();
    if (ch == EOF) return false;
    ++line_;
    record_line_ = line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (;; ch = in_.get()) {
      if (quoted) {
        if (ch == EOF) throw DataError(source_ + ": unterminated quote in row " + std::to_string(record_line_));
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(static_cast<char>(ch));
        }
        continue;
      }
      if (ch == EOF || ch == '\n') {
        if (!field.empty() && field.back() == '\r' && !was_quoted) field.pop_back();
        row.push_back(std::move(field));
        return true;
      }
      if (ch == '\r' && (in_.peek() == '\n' || in_.peek() == EOF)) continue;
      if (ch == ',') {
        row.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (ch == '"' && field.empty() && !was_quoted) {
        quoted = true;
        was_quoted = true;
      } else {
        if (was_quoted) throw DataError(source_ + ": stray character after quoted field in row " + std::to_string(record_line_));
        field.push_back(static_cast<char>(ch));
      }
    }
  }

  std::size_t line() const { return record_line_; }
  const std::string& source() const { return source_; }

private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

// Header-indexed table view of a CSV file.
class Table {
public:
  static Table read(std::istream& in, const std::string& source) {
    Table t;
    Reader r(in, source);
    Row row;
    if (!r.next(row)) return t;
    t.header_ = row;
    for (std::size_t i = 0; i < row.size(); ++i) t.index_[row[i]] = i;
    while (r.next(row)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (row.size() != t.header_.size())
        throw DataError(source + ": row " + std::to_string(r.line()) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(t.header_.size()));
      t.rows_.push_back(std::move(row));
      t.lines_.push_back(r.line());
    }
    return t;
  }

  static Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return read(in, path);
  }

  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t line_of(std::size_t row) const { return lines_[row]; }

  std::optional<std::size_t> column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // First of the given aliases that exists.
  std::optional<std::size_t> column_any(std::initializer_list<std::string_view> names) const {
    for (auto n : names)
      if (auto c = column(n)) return c;
    return std::nullopt;
  }

private:
  Row header_;
  std::vector<Row> rows_;
  std::vector<std::size_t> lines_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string escape(std::string_view field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

} // namespace cxrnle::csv
