#pragma once

// Minimal TOML-style key/value reader used for lexicon and option files.
//
// Supported grammar:
//   # comment
//   [section]
//   key = "string" | 'string' | 123 | 0.5 | true | false
//   key = ["a", "b",
//          "c"]            # arrays may span lines; trailing comma allowed
//
// Keys are addressed as "section.key" (or "key" before any section header).

#include <cxrnle/labels.hpp>
#include <cxrnle/text.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace cxrnle::config {

using Value = std::variant<std::string, double, bool, std::vector<std::string>>;

class Document {
public:
  static Document parse(std::string_view src, const std::string& source = "<config>") {
    Document doc;
    std::string section;
    std::size_t pos = 0, line = 1;

    auto fail = [&](const std::string& what) -> void {
      throw DataError(source + ":" + std::to_string(line) + ": " + what);
    };
    auto skip_ws = [&](bool newlines) {
      while (pos < src.size()) {
        char c = src[pos];
        if (c == '#') {
          while (pos < src.size() && src[pos] != '\n') ++pos;
        } else if (c == '\n' && newlines) {
          ++line;
          ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r') {
          ++pos;
        } else {
          break;
        }
      }
    };
    auto parse_string = [&]() -> std::string {
      char q = src[pos++];
      std::string out;
      while (pos < src.size() && src[pos] != q) {
        char c = src[pos++];
        if (c == '\n') fail("newline in string");
        if (c == '\\' && q == '"' && pos < src.size()) {
          char e = src[pos++];
          switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            default: fail(std::string("unknown escape \\") + e);
          }
        } else {
          out.push_back(c);
        }
      }
      if (pos >= src.size()) fail("unterminated string");
      ++pos;
      return out;
    };

    while (true) {
      skip_ws(true);
      if (pos >= src.size()) break;
      if (src[pos] == '[') {
        auto end = src.find(']', pos);
        if (end == std::string_view::npos) fail("unterminated section header");
        section = std::string(text::trim(src.substr(pos + 1, end - pos - 1)));
        pos = end + 1;
        continue;
      }
      auto eq = src.find('=', pos);
      auto nl = src.find('\n', pos);
      if (eq == std::string_view::npos || (nl != std::string_view::npos && nl < eq))
        fail("expected key = value");
      std::string key(text::trim(src.substr(pos, eq - pos)));
      if (key.empty()) fail("empty key");
      if (!section.empty()) key = section + "." + key;
      pos = eq + 1;
      skip_ws(false);
      if (pos >= src.size()) fail("missing value");

      Value value;
      char c = src[pos];
      if (c == '"' || c == '\'') {
        value = parse_string();
      } else if (c == '[') {
        ++pos;
        std::vector<std::string> items;
        while (true) {
          skip_ws(true);
          if (pos >= src.size()) fail("unterminated array");
          if (src[pos] == ']') {
            ++pos;
            break;
          }
          if (src[pos] != '"' && src[pos] != '\'') fail("arrays must contain strings");
          items.push_back(parse_string());
          skip_ws(true);
          if (pos < src.size() && src[pos] == ',') ++pos;
        }
        value = std::move(items);
      } else {
        std::size_t end = pos;
        while (end < src.size() && src[end] != '\n' && src[end] != '#') ++end;
        std::string raw(text::trim(src.substr(pos, end - pos)));
        pos = end;
        if (raw == "true") {
          value = true;
        } else if (raw == "false") {
          value = false;
        } else {
          try {
            std::size_t used = 0;
            double d = std::stod(raw, &used);
            if (used != raw.size()) fail("bad value '" + raw + "'");
            value = d;
          } catch (const std::logic_error&) {
            fail("bad value '" + raw + "'");
          }
        }
      }
      if (doc.values_.count(key)) fail("duplicate key '" + key + "'");
      doc.values_[key] = std::move(value);
      skip_ws(false);
      if (pos < src.size() && src[pos] != '\n') fail("trailing characters after value");
    }
    return doc;
  }

  static Document load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, Value>& values() const { return values_; }

  std::optional<std::string> get_string(const std::string& key) const { return get<std::string>(key); }
  std::optional<double> get_number(const std::string& key) const { return get<double>(key); }
  std::optional<bool> get_bool(const std::string& key) const { return get<bool>(key); }
  std::optional<std::vector<std::string>> get_list(const std::string& key) const {
    return get<std::vector<std::string>>(key);
  }

  // Lookup trying "section.key" first, then bare "key".
  template <typename T>
  std::optional<T> get_in(const std::string& section, const std::string& key) const {
    if (auto v = get<T>(section + "." + key)) return v;
    return get<T>(key);
  }

private:
  template <typename T>
  std::optional<T> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (auto* v = std::get_if<T>(&it->second)) return *v;
    throw DataError("config key '" + key + "' has the wrong type");
  }

  std::map<std::string, Value> values_;
};

} // namespace cxrnle::config
