#include "spherecorr/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace spherecorr {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class ValueParser {
 public:
  ValueParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  json parse() {
    json v = value();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated string");
        const char e = s_[pos_++];
        switch (e) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    for (;;) {
      json v = value();
      if (v.is_array()) fail("nested arrays are not supported");
      arr.push_back(std::move(v));
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected , or ] in array");
    }
  }

  json number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '+' ||
                               s_[end] == '-' || s_[end] == '.' || s_[end] == '_'))
      ++end;
    std::string tok;
    for (std::size_t i = pos_; i < end; ++i)
      if (s_[i] != '_') tok.push_back(s_[i]);
    if (tok.empty()) fail("unrecognized value");
    pos_ = end;
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "+inf" ||
                          tok == "-inf" || tok == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
      auto r = std::from_chars(b, tok.data() + tok.size(), v);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
      return v;
    }
    double v = 0;
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    auto r = std::from_chars(b, tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

std::vector<std::string> split_key(std::string_view key, std::size_t line) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      parts.push_back(std::string(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(std::string(trim(cur)));
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty key segment");
    for (char c : p)
      if (!bare_key_char(c)) throw ConfigError("config line " + std::to_string(line) + ": bad key '" + p + "'");
  }
  return parts;
}

json& descend(json& root, const std::vector<std::string>& path, std::size_t line) {
  json* cur = &root;
  for (const auto& p : path) {
    if (!cur->contains(p)) (*cur)[p] = json::object();
    cur = &(*cur)[p];
    if (!cur->is_object())
      throw ConfigError("config line " + std::to_string(line) + ": '" + p + "' is not a table");
  }
  return *cur;
}

bool compatible(const json& slot, const json& v) {
  if (slot.is_number() && v.is_number()) {
    if (slot.is_number_float()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && d == std::floor(d);
    }
    if (slot.is_number_unsigned() && v.is_number_integer() && v.get<std::int64_t>() < 0) return false;
    return true;
  }
  if (slot.is_array() && v.is_array()) return true;
  return slot.type() == v.type();
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  json* table = &root;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    std::string_view t = trim(line);
    if (t.empty() || t[0] == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (t[0] == '[') {
      const std::size_t close = t.find(']');
      if (close == std::string_view::npos || t.substr(0, 2) == "[[")
        throw ConfigError("config line " + std::to_string(line_no) + ": bad table header");
      std::string_view rest = trim(t.substr(close + 1));
      if (!rest.empty() && rest[0] != '#')
        throw ConfigError("config line " + std::to_string(line_no) + ": trailing characters after header");
      table = &descend(root, split_key(t.substr(1, close - 1), line_no), line_no);
    } else {
      const std::size_t eq = t.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      auto path = split_key(t.substr(0, eq), line_no);
      const std::string leaf = path.back();
      path.pop_back();
      json& dst = descend(*table, path, line_no);
      if (dst.contains(leaf)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + leaf + "'");
      dst[leaf] = ValueParser(t.substr(eq + 1), line_no).parse();
    }
    if (end == text.size()) break;
  }
  return root;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      json j = json::parse(text);
      if (!j.is_object()) throw ConfigError("config " + path.string() + ": top level must be an object");
      return j;
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + path.string() + ": " + e.what());
    }
  }
  return parse_toml(text);
}

void merge_config(json& base, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError("config" + (where.empty() ? "" : " section " + where) + " must be a table");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, it.value(), key);
      continue;
    }
    if (!compatible(slot, it.value()))
      throw ConfigError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                        it.value().type_name());
    if (slot.is_number_integer() && it.value().is_number_float())
      slot = static_cast<std::int64_t>(it.value().get<double>());
    else if (slot.is_number_float() && !it.value().is_number_float())
      slot = it.value().get<double>();
    else
      slot = it.value();
  }
}

void apply_override(json& cfg, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string_view key = trim(assignment.substr(0, eq));
  const std::string_view raw = trim(assignment.substr(eq + 1));
  std::vector<std::string> path;
  try {
    path = split_key(key, 0);
  } catch (const ConfigError&) {
    throw ConfigError("bad override key '" + std::string(key) + "'");
  }
  json value;
  try {
    value = ValueParser(raw, 0).parse();
  } catch (const ConfigError&) {
    value = std::string(raw);
  }
  json overlay = value;
  for (auto it = path.rbegin(); it != path.rend(); ++it) overlay = json{{*it, overlay}};
  merge_config(cfg, overlay);
}

}  // namespace spherecorr
