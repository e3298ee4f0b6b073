#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "deardr/corpus.hpp"
#include "deardr/decode.hpp"
#include "deardr/error.hpp"
#include "deardr/io.hpp"

namespace deardr {

using AnswerSets = std::vector<std::vector<std::string>>;

struct GoldRecord {
  std::string id;
  std::string query;
  AnswerSets answer_sets;
};

namespace detail {

inline void check_gold(const AnswerSets& sets) {
  if (sets.empty()) throw Error(ErrorCode::kEmptyGold, "no answer sets");
  for (const auto& s : sets) {
    if (s.empty()) throw Error(ErrorCode::kEmptyGold, "empty answer set");
  }
}

inline void check_distinct(const std::vector<std::string>& ranked) {
  std::unordered_set<std::string_view> seen;
  for (const auto& t : ranked) {
    if (!seen.insert(t).second) throw Error(ErrorCode::kDuplicateTitle, "title '" + t + "' ranked twice");
  }
}

// |top-k of ranked ∩ S| / |S|, maximized over answer sets S. When k is
// unset each set uses its own size.
inline double best_set_fraction(const std::vector<std::string>& ranked, const AnswerSets& sets,
                                std::optional<std::size_t> k) {
  check_gold(sets);
  check_distinct(ranked);
  double best = 0.0;
  for (const auto& raw : sets) {
    const std::set<std::string> gold(raw.begin(), raw.end());
    const std::size_t cut = std::min(k.value_or(gold.size()), ranked.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cut; ++i) hits += gold.contains(ranked[i]);
    best = std::max(best, static_cast<double>(hits) / static_cast<double>(gold.size()));
  }
  return best;
}

}  // namespace detail

/// Precision of the top R results, R being the answer-set size; max over
/// alternative answer sets.
inline double r_precision(const std::vector<std::string>& ranked, const AnswerSets& sets) {
  return detail::best_set_fraction(ranked, sets, std::nullopt);
}

/// Share of an answer set found in the top k; max over answer sets.
inline double recall_at_k(const std::vector<std::string>& ranked, const AnswerSets& sets, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  return detail::best_set_fraction(ranked, sets, k);
}

struct QueryMetrics {
  std::string id;
  double r_precision = 0.0;
  std::vector<double> recall;  // aligned with MetricsReport::ks
  bool missing = false;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<QueryMetrics> queries;
  double mean_r_precision = 0.0;
  std::vector<double> mean_recall;
  // Queries scoring a nonzero recall at each k.
  std::vector<std::size_t> hits_at_k;
  std::size_t missing = 0;
  std::size_t excluded = 0;
  std::size_t unknown_results = 0;
};

/// Macro-averaged metrics over gold queries in gold-file order.
inline MetricsReport evaluate(const std::vector<GoldRecord>& gold,
                              const std::map<std::string, std::vector<std::string>>& results,
                              const std::vector<std::size_t>& ks) {
  MetricsReport rep;
  rep.ks = ks;
  rep.mean_recall.assign(ks.size(), 0.0);
  rep.hits_at_k.assign(ks.size(), 0);
  static const std::vector<std::string> kEmpty;
  for (const auto& g : gold) {
    QueryMetrics q;
    q.id = g.id;
    auto it = results.find(g.id);
    q.missing = it == results.end();
    rep.missing += q.missing;
    const auto& ranked = q.missing ? kEmpty : it->second;
    q.r_precision = r_precision(ranked, g.answer_sets);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      q.recall.push_back(recall_at_k(ranked, g.answer_sets, ks[i]));
      rep.hits_at_k[i] += q.recall.back() > 0.0;
    }
    rep.queries.push_back(std::move(q));
  }
  std::unordered_set<std::string_view> gold_ids;
  for (const auto& g : gold) gold_ids.insert(g.id);
  for (const auto& [id, _] : results) rep.unknown_results += !gold_ids.contains(id);
  if (!rep.queries.empty()) {
    const double n = static_cast<double>(rep.queries.size());
    for (const auto& q : rep.queries) {
      rep.mean_r_precision += q.r_precision;
      for (std::size_t i = 0; i < ks.size(); ++i) rep.mean_recall[i] += q.recall[i];
    }
    rep.mean_r_precision /= n;
    for (auto& v : rep.mean_recall) v /= n;
  }
  return rep;
}

inline std::string id_string(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

struct GoldFile {
  std::vector<GoldRecord> records;
  // Records without any answer set (e.g. NOT ENOUGH INFO claims).
  std::size_t excluded = 0;
};

/// Reads gold JSONL. Titles are normalized; records with no answer sets are
/// dropped and counted. answer_sets may be absent for query-only files.
inline GoldFile load_gold(const std::filesystem::path& path, bool require_answers = true) {
  GoldFile out;
  io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    try {
      const auto js = nlohmann::json::parse(line);
      GoldRecord g;
      g.id = id_string(js.at("id"));
      g.query = js.at("query").get<std::string>();
      if (js.contains("answer_sets")) {
        for (const auto& set : js.at("answer_sets")) {
          std::vector<std::string> titles;
          for (const auto& t : set) titles.push_back(normalize_title(t.get<std::string>()));
          if (titles.empty()) throw Error(ErrorCode::kEmptyGold, "empty answer set");
          g.answer_sets.push_back(std::move(titles));
        }
      }
      if (require_answers && g.answer_sets.empty()) {
        ++out.excluded;
        return;
      }
      out.records.push_back(std::move(g));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return out;
}

/// Reads results JSONL into id -> ranked titles (normalized).
inline std::map<std::string, std::vector<std::string>> load_results(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> out;
  io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    RankedResult r;
    try {
      r = ranked_result_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    std::vector<std::string> titles;
    for (const auto& st : r.ranked) titles.push_back(normalize_title(st.title));
    if (!out.emplace(r.id, std::move(titles)).second) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(lineno) + ": duplicate id " + r.id);
    }
  });
  return out;
}

struct EvaluateOptions {
  std::vector<std::size_t> ks{1, 5, 10};
  // Largest tolerated share of gold queries missing from the results.
  double allow_missing = 1.0;
};

inline MetricsReport evaluate(const std::filesystem::path& results_path, const std::filesystem::path& gold_path,
                              const EvaluateOptions& opts = {}) {
  const auto gold = load_gold(gold_path);
  const auto results = load_results(results_path);
  auto rep = evaluate(gold.records, results, opts.ks);
  rep.excluded = gold.excluded;
  if (rep.missing > 0) {
    std::cerr << "warning: " << rep.missing << " gold queries have no results; scored as empty rankings\n";
  }
  if (!gold.records.empty() &&
      static_cast<double>(rep.missing) > opts.allow_missing * static_cast<double>(gold.records.size())) {
    throw Error(ErrorCode::kIdMismatch, std::to_string(rep.missing) + " of " +
                                            std::to_string(gold.records.size()) + " gold queries missing from results");
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const MetricsReport& rep, bool per_query = true) {
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  nlohmann::ordered_json hits = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < rep.ks.size(); ++i) {
    recall[std::to_string(rep.ks[i])] = rep.mean_recall[i];
    hits[std::to_string(rep.ks[i])] = rep.hits_at_k[i];
  }
  nlohmann::ordered_json js = {{"queries", rep.queries.size()},
                               {"missing", rep.missing},
                               {"excluded", rep.excluded},
                               {"unknown_results", rep.unknown_results},
                               {"r_precision", rep.mean_r_precision},
                               {"recall", std::move(recall)},
                               {"hits_at_k", std::move(hits)}};
  if (per_query) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& q : rep.queries) {
      nlohmann::ordered_json r = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < rep.ks.size(); ++i) r[std::to_string(rep.ks[i])] = q.recall[i];
      rows.push_back({{"id", q.id}, {"r_precision", q.r_precision}, {"recall", std::move(r)}});
    }
    js["per_query"] = std::move(rows);
  }
  return js;
}

inline std::string to_table(const MetricsReport& rep) {
  std::ostringstream os;
  char buf[64];
  os << "queries  " << rep.queries.size() << "  (missing " << rep.missing << ", excluded " << rep.excluded
     << ")\n";
  os << "metric         value\n";
  std::snprintf(buf, sizeof buf, "%-12s %8.4f\n", "R-Precision", rep.mean_r_precision);
  os << buf;
  for (std::size_t i = 0; i < rep.ks.size(); ++i) {
    const std::string name = "Recall@" + std::to_string(rep.ks[i]);
    std::snprintf(buf, sizeof buf, "%-12s %8.4f\n", name.c_str(), rep.mean_recall[i]);
    os << buf;
  }
  return os.str();
}

}  // namespace deardr
