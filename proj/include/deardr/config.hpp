#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deardr/error.hpp"
#include "deardr/io.hpp"

namespace deardr {

using KeyValues = std::map<std::string, std::string>;

inline std::string canonical_key(std::string_view key) {
  std::string out;
  for (char c : key) out.push_back(c == '_' ? '-' : c);
  return out;
}

/// Parses the flat config format: one `key = value` per line, `#` starts a
/// comment, values may be double-quoted, `[section]` headers are ignored so
/// simple TOML files load too. Underscores in keys read as dashes.
inline KeyValues parse_key_values(std::string_view text, std::string_view origin = "config") {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(line);
    if (body.empty() || body[0] == '#' || body[0] == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, std::string(origin) + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = canonical_key(trim(body.substr(0, eq)));
    std::string value = trim(body.substr(eq + 1));
    if (!value.empty() && value.front() == '"') {
      const auto close = value.find('"', 1);
      if (close == std::string::npos) {
        throw Error(ErrorCode::kParseError, std::string(origin) + ":" + std::to_string(lineno) + ": unterminated string");
      }
      value = value.substr(1, close - 1);
    } else if (auto hash = value.find('#'); hash != std::string::npos) {
      value = trim(value.substr(0, hash));
    }
    if (key.empty()) {
      throw Error(ErrorCode::kParseError, std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  return parse_key_values(io::read_file(path), path.string());
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = \"";
    out += v;
    out += "\"\n";
  }
  return out;
}

/// Everything a run needs, resolved from config file values overlaid with
/// command-line flags. Fields mirror the long flag names.
struct RunConfig {
  std::string command;

  // paths
  std::string input;
  std::string output;
  std::string corpus;
  std::string index;
  std::string trie;
  std::string vocab;
  std::string queries;
  std::string results;
  std::string gold;
  std::string out_dir;

  // ingestion
  bool raw = false;
  bool strict = true;

  // supervision
  std::string mode = "pt";
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_per_doc;
  std::size_t n = 0;

  // indexing and retrieval
  std::string type = "trie";
  std::string scorer = "lexical";
  std::size_t beam = 10;
  std::size_t max_titles = 5;
  std::size_t max_len = 64;
  bool length_norm = true;
  bool unconstrained = false;
  std::size_t workers = 1;
  int timeout_ms = 30000;
  std::size_t top_k = 10;
  double k1 = 1.2;
  double b = 0.75;
  std::vector<std::string> baselines;

  // evaluation
  std::vector<std::size_t> ks{1, 5, 10};
  std::string format = "table";
  double allow_missing = 1.0;

  // forwarded untouched to external scorers
  std::map<std::string, std::string> passthrough;

  static constexpr const char* kPassthroughKeys[] = {"learning-rate", "scheduler", "dropout"};

  static RunConfig from_key_values(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [key, value] : kv) c.set(key, value);
    return c;
  }

  void set(const std::string& raw_key, const std::string& v) {
    const std::string key = canonical_key(raw_key);
    if (key == "command") command = v;
    else if (key == "input") input = v;
    else if (key == "output") output = v;
    else if (key == "corpus") corpus = v;
    else if (key == "index") index = v;
    else if (key == "trie") trie = v;
    else if (key == "vocab") vocab = v;
    else if (key == "queries") queries = v;
    else if (key == "results") results = v;
    else if (key == "gold") gold = v;
    else if (key == "out-dir") out_dir = v;
    else if (key == "raw") raw = to_bool(key, v);
    else if (key == "strict") strict = to_bool(key, v);
    else if (key == "mode") mode = v;
    else if (key == "seed") seed = to_uint(key, v);
    else if (key == "max-per-doc") max_per_doc = v.empty() ? std::nullopt : std::optional(to_uint(key, v));
    else if (key == "n") n = to_uint(key, v);
    else if (key == "type") type = v;
    else if (key == "scorer") scorer = v;
    else if (key == "beam") beam = to_uint(key, v);
    else if (key == "max-titles") max_titles = to_uint(key, v);
    else if (key == "max-len") max_len = to_uint(key, v);
    else if (key == "length-norm") length_norm = to_bool(key, v);
    else if (key == "unconstrained") unconstrained = to_bool(key, v);
    else if (key == "workers") workers = to_uint(key, v);
    else if (key == "timeout-ms") timeout_ms = static_cast<int>(to_uint(key, v));
    else if (key == "top-k") top_k = to_uint(key, v);
    else if (key == "k1") k1 = to_double(key, v);
    else if (key == "b") b = to_double(key, v);
    else if (key == "baselines") baselines = split(v);
    else if (key == "k") {
      ks.clear();
      for (const auto& part : split(v)) ks.push_back(to_uint(key, part));
    }
    else if (key == "format") format = v;
    else if (key == "allow-missing") allow_missing = to_double(key, v);
    else if (is_passthrough(key)) passthrough[key] = v;
    else throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + raw_key + "'");
  }

  // Full resolved configuration, defaults included.
  KeyValues to_key_values() const {
    KeyValues kv;
    auto put = [&](const char* k, const std::string& v) { kv[k] = v; };
    put("command", command);
    put("input", input);
    put("output", output);
    put("corpus", corpus);
    put("index", index);
    put("trie", trie);
    put("vocab", vocab);
    put("queries", queries);
    put("results", results);
    put("gold", gold);
    put("out-dir", out_dir);
    put("raw", raw ? "true" : "false");
    put("strict", strict ? "true" : "false");
    put("mode", mode);
    put("seed", std::to_string(seed));
    put("max-per-doc", max_per_doc ? std::to_string(*max_per_doc) : "");
    put("n", std::to_string(n));
    put("type", type);
    put("scorer", scorer);
    put("beam", std::to_string(beam));
    put("max-titles", std::to_string(max_titles));
    put("max-len", std::to_string(max_len));
    put("length-norm", length_norm ? "true" : "false");
    put("unconstrained", unconstrained ? "true" : "false");
    put("workers", std::to_string(workers));
    put("timeout-ms", std::to_string(timeout_ms));
    put("top-k", std::to_string(top_k));
    put("k1", number(k1));
    put("b", number(b));
    put("baselines", join(baselines));
    std::vector<std::string> kstr;
    for (auto k : ks) kstr.push_back(std::to_string(k));
    put("k", join(kstr));
    put("format", format);
    put("allow-missing", number(allow_missing));
    for (const auto& [k, v] : passthrough) kv[k] = v;
    return kv;
  }

  std::string serialize() const { return format_key_values(to_key_values()); }
  std::string hash() const { return io::sha256_hex(serialize()); }

  static bool is_passthrough(const std::string& key) {
    for (const char* p : kPassthroughKeys) {
      if (key == p) return true;
    }
    return false;
  }

 private:
  static bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::kInvalidArgument, "'" + key + "' expects a boolean, got '" + v + "'");
  }

  static std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw Error(ErrorCode::kInvalidArgument, "'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::kInvalidArgument, "'" + key + "' expects a number, got '" + v + "'");
  }

  static std::string number(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
  }

  static std::vector<std::string> split(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) out.push_back(',');
      out += parts[i];
    }
    return out;
  }
};

}  // namespace deardr
