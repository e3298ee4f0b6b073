#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deardr/corpus.hpp"
#include "deardr/error.hpp"
#include "deardr/io.hpp"
#include "deardr/rng.hpp"

namespace deardr {

// Target modes: the page title, the sentence's hyperlinks, or both.
enum class Mode { kPT, kHL, kPTHL };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kPT: return "PT";
    case Mode::kHL: return "HL";
    case Mode::kPTHL: return "PTHL";
  }
  return "PT";
}

inline Mode parse_mode(std::string_view s) {
  std::string up;
  for (char c : s) up.push_back(static_cast<char>(c >= 'a' && c <= 'z' ? c - 32 : c));
  if (up == "PT") return Mode::kPT;
  if (up == "HL") return Mode::kHL;
  if (up == "PTHL") return Mode::kPTHL;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(s) + "'");
}

struct TrainingInstance {
  std::string input;
  std::vector<std::string> targets;
  Mode mode = Mode::kPT;
  std::string source_title;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

// In-corpus link targets of a sentence in span order, first occurrence kept.
inline std::vector<std::string> link_targets(const Sentence& s) {
  std::vector<std::string> out;
  for (const auto& l : s.links) {
    if (l.dangling) continue;
    if (std::find(out.begin(), out.end(), l.target) == out.end()) out.push_back(l.target);
  }
  return out;
}

inline std::optional<TrainingInstance> make_instance(const Document& doc, const Sentence& s,
                                                     Mode mode) {
  TrainingInstance inst{s.text, {}, mode, doc.title};
  switch (mode) {
    case Mode::kPT:
      inst.targets = {doc.title};
      break;
    case Mode::kHL:
      inst.targets = link_targets(s);
      if (inst.targets.empty()) return std::nullopt;
      break;
    case Mode::kPTHL:
      inst.targets = {doc.title};
      for (auto& t : link_targets(s)) {
        if (t != doc.title) inst.targets.push_back(std::move(t));
      }
      break;
  }
  return inst;
}

struct GenerateOptions {
  Mode mode = Mode::kPT;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_per_doc;
};

/// Emits instances in document insertion order, then sentence order. With a
/// per-document cap, the kept sentences are a uniform sample without
/// replacement drawn from a generator seeded by (seed, document index), so
/// documents can be processed independently without changing the output.
inline void generate_instances(const Corpus& corpus, const GenerateOptions& opts,
                               const std::function<void(const TrainingInstance&)>& sink) {
  const auto& docs = corpus.documents();
  for (std::size_t di = 0; di < docs.size(); ++di) {
    const Document& doc = docs[di];
    std::vector<TrainingInstance> eligible;
    for (const auto& s : doc.sentences) {
      if (auto inst = make_instance(doc, s, opts.mode)) eligible.push_back(std::move(*inst));
    }
    if (opts.max_per_doc && eligible.size() > *opts.max_per_doc) {
      std::vector<std::size_t> idx(eligible.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(splitmix64(opts.seed ^ splitmix64(di)));
      rng.partial_shuffle(idx, *opts.max_per_doc);
      idx.resize(*opts.max_per_doc);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) sink(eligible[i]);
    } else {
      for (const auto& inst : eligible) sink(inst);
    }
  }
}

inline std::vector<TrainingInstance> generate_instances(const Corpus& corpus,
                                                        const GenerateOptions& opts) {
  std::vector<TrainingInstance> out;
  generate_instances(corpus, opts, [&](const TrainingInstance& t) { out.push_back(t); });
  return out;
}

inline nlohmann::ordered_json to_json(const TrainingInstance& t) {
  return {{"input", t.input},
          {"targets", t.targets},
          {"mode", std::string(to_string(t.mode))},
          {"source_title", t.source_title}};
}

inline TrainingInstance instance_from_json(const nlohmann::json& js) {
  TrainingInstance t;
  t.input = js.at("input").get<std::string>();
  t.targets = js.at("targets").get<std::vector<std::string>>();
  t.mode = parse_mode(js.at("mode").get<std::string>());
  t.source_title = js.at("source_title").get<std::string>();
  return t;
}

// Writes instance JSONL and returns the number of lines written.
inline std::size_t write_instances(const Corpus& corpus, const GenerateOptions& opts,
                                   const std::filesystem::path& path) {
  std::string out;
  std::size_t n = 0;
  generate_instances(corpus, opts, [&](const TrainingInstance& t) {
    out += to_json(t).dump();
    out.push_back('\n');
    ++n;
  });
  io::write_file(path, out);
  return n;
}

/// Uniform sample of min(n, total) lines without replacement, in sampled
/// order. n >= total yields a permutation of the whole file.
inline std::vector<std::string> subsample_lines(std::vector<std::string> lines, std::size_t n,
                                                std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  rng.partial_shuffle(lines, n);
  if (lines.size() > n) lines.resize(n);
  return lines;
}

inline std::size_t subsample(const std::filesystem::path& input, std::size_t n,
                             std::uint64_t seed, const std::filesystem::path& output) {
  std::vector<std::string> lines;
  io::for_each_line(input, [&](std::string_view l, std::size_t) {
    if (!l.empty()) lines.emplace_back(l);
  });
  auto picked = subsample_lines(std::move(lines), n, seed);
  std::string out;
  for (const auto& l : picked) {
    out += l;
    out.push_back('\n');
  }
  io::write_file(output, out);
  return picked.size();
}

}  // namespace deardr
