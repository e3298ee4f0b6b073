#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "deardr/error.hpp"
#include "deardr/io.hpp"
#include "deardr/utf8.hpp"

namespace deardr {

// A link from a sentence to another page. Offsets are half-open and counted
// in Unicode scalar values of the sentence's plain text.
struct Hyperlink {
  std::string target;
  std::string anchor;
  std::size_t start = 0;
  std::size_t end = 0;
  // Set after load when the target is not a member of the corpus.
  bool dangling = false;

  friend bool operator==(const Hyperlink&, const Hyperlink&) = default;
};

struct Sentence {
  std::string text;
  std::vector<Hyperlink> links;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Document {
  std::string title;
  std::vector<Sentence> sentences;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Wikipedia title convention: underscores become spaces, whitespace runs
/// collapse, ends are trimmed and the first scalar is uppercased.
inline std::string normalize_title(std::string_view raw) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : utf8::decode(raw)) {
    if (c == U'_' || utf8::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyTitle, "title is empty after normalization");
  out[0] = utf8::to_upper(out[0]);
  return utf8::encode(out);
}

struct ExtractedSentence {
  std::string text;
  std::vector<Hyperlink> links;
  // Count of unclosed "[[" regions that were copied through verbatim.
  std::size_t malformed = 0;
};

namespace detail {

inline bool is_dropped_namespace(std::u32string_view target) {
  while (!target.empty() && (target.front() == U':' || utf8::is_space(target.front()))) {
    target.remove_prefix(1);
  }
  static constexpr std::u32string_view kDropped[] = {U"file:", U"image:", U"category:"};
  for (auto ns : kDropped) {
    if (target.size() < ns.size()) continue;
    bool match = true;
    for (std::size_t i = 0; i < ns.size() && match; ++i) {
      match = utf8::to_lower(target[i]) == ns[i];
    }
    if (match) return true;
  }
  return false;
}

inline std::optional<std::string> try_normalize(std::string_view raw) {
  try {
    return normalize_title(raw);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Strips [[target]] and [[target|anchor]] markup from one sentence of
/// wikitext and returns the plain text with link spans measured against it.
/// Section anchors ("#...") are cut from targets, and File:/Image:/Category:
/// links are removed entirely. An unclosed "[[" is copied through as text.
inline ExtractedSentence extract_links(std::string_view wikitext) {
  const std::u32string src = utf8::decode(wikitext);
  std::u32string plain;
  ExtractedSentence out;
  std::size_t i = 0;
  while (i < src.size()) {
    if (!(src[i] == U'[' && i + 1 < src.size() && src[i + 1] == U'[')) {
      plain.push_back(src[i++]);
      continue;
    }
    const std::size_t close = src.find(U"]]", i + 2);
    const std::size_t reopen = src.find(U"[[", i + 2);
    if (close == std::u32string::npos || (reopen != std::u32string::npos && reopen < close)) {
      // Unclosed or nested: emit the opening brackets as text and move on.
      ++out.malformed;
      plain.append(src, i, 2);
      i += 2;
      continue;
    }
    std::u32string_view inner(src.data() + i + 2, close - i - 2);
    i = close + 2;

    std::u32string_view target_part = inner;
    std::u32string_view anchor_part = inner;
    if (auto bar = inner.find(U'|'); bar != std::u32string_view::npos) {
      target_part = inner.substr(0, bar);
      anchor_part = inner.substr(bar + 1);
      if (anchor_part.empty()) anchor_part = target_part;
    }
    if (detail::is_dropped_namespace(target_part)) continue;

    std::u32string_view target_raw = target_part;
    if (auto hash = target_raw.find(U'#'); hash != std::u32string_view::npos) {
      target_raw = target_raw.substr(0, hash);
    }
    const std::size_t start = plain.size();
    plain.append(anchor_part);
    const std::size_t end = plain.size();

    auto target = detail::try_normalize(utf8::encode(target_raw));
    if (!target || start == end) continue;
    out.links.push_back(Hyperlink{*target, utf8::encode(anchor_part), start, end, false});
  }
  out.text = utf8::encode(plain);
  return out;
}

struct LoadStats {
  std::size_t skipped_lines = 0;
  std::size_t duplicate_titles = 0;
  std::size_t malformed_markup = 0;
  std::size_t dangling_links = 0;
};

struct LoadOptions {
  bool raw = false;
  bool strict = true;
};

/// Documents keyed by normalized title, kept in insertion order. Immutable
/// once loaded; concurrent readers need no locking.
class Corpus {
 public:
  Corpus() = default;

  // Adds a document unless its title is already present. Returns false for
  // duplicates. Hyperlink dangling flags are not updated; call
  // resolve_links() once all documents are in.
  bool add(Document doc) {
    doc.title = normalize_title(doc.title);
    if (by_title_.contains(doc.title)) return false;
    by_title_.emplace(doc.title, docs_.size());
    docs_.push_back(std::move(doc));
    return true;
  }

  std::size_t resolve_links() {
    std::size_t dangling = 0;
    for (auto& d : docs_) {
      for (auto& s : d.sentences) {
        for (auto& l : s.links) {
          l.dangling = !contains(l.target);
          dangling += l.dangling;
        }
      }
    }
    return dangling;
  }

  const Document* find(std::string_view title) const {
    auto it = by_title_.find(std::string(title));
    if (it == by_title_.end()) {
      auto norm = detail::try_normalize(title);
      if (!norm) return nullptr;
      it = by_title_.find(*norm);
      if (it == by_title_.end()) return nullptr;
    }
    return &docs_[it->second];
  }

  bool contains(std::string_view title) const { return find(title) != nullptr; }

  const std::vector<Document>& documents() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }

  std::vector<std::string> titles() const {
    std::vector<std::string> out;
    out.reserve(docs_.size());
    for (const auto& d : docs_) out.push_back(d.title);
    return out;
  }

  std::size_t sentence_count() const {
    std::size_t n = 0;
    for (const auto& d : docs_) n += d.sentences.size();
    return n;
  }

  const LoadStats& stats() const { return stats_; }
  LoadStats& mutable_stats() { return stats_; }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.docs_ == b.docs_; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_title_;
  LoadStats stats_;
};

namespace detail {

inline Sentence sentence_from_json(const nlohmann::json& js) {
  Sentence s;
  s.text = js.at("text").get<std::string>();
  const std::size_t len = utf8::length(s.text);
  const std::u32string cps = utf8::decode(s.text);
  if (js.contains("links")) {
    for (const auto& lj : js.at("links")) {
      Hyperlink l;
      l.target = normalize_title(lj.at("target").get<std::string>());
      l.anchor = lj.at("anchor").get<std::string>();
      l.start = lj.at("start").get<std::size_t>();
      l.end = lj.at("end").get<std::size_t>();
      if (!(l.start < l.end && l.end <= len)) {
        throw Error(ErrorCode::kParseError, "link span out of range");
      }
      if (utf8::encode(std::u32string_view(cps).substr(l.start, l.end - l.start)) != l.anchor) {
        throw Error(ErrorCode::kParseError, "anchor does not match span text");
      }
      if (!s.links.empty() && s.links.back().end > l.start) {
        throw Error(ErrorCode::kParseError, "links unsorted or overlapping");
      }
      s.links.push_back(std::move(l));
    }
  }
  return s;
}

inline Document document_from_line(std::string_view line, bool raw, std::size_t& malformed) {
  const auto js = nlohmann::json::parse(line);
  Document doc;
  doc.title = normalize_title(js.at("title").get<std::string>());
  if (raw) {
    const auto wikitext = js.at("wikitext").get<std::string>();
    std::size_t pos = 0;
    while (pos <= wikitext.size()) {
      auto nl = wikitext.find('\n', pos);
      if (nl == std::string::npos) nl = wikitext.size();
      std::string_view piece(wikitext.data() + pos, nl - pos);
      pos = nl + 1;
      if (piece.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      auto ex = extract_links(piece);
      malformed += ex.malformed;
      doc.sentences.push_back(Sentence{std::move(ex.text), std::move(ex.links)});
    }
  } else {
    for (const auto& sj : js.at("sentences")) doc.sentences.push_back(sentence_from_json(sj));
  }
  return doc;
}

}  // namespace detail

/// Reads corpus JSONL (or raw {"title","wikitext"} JSONL when options.raw).
/// With strict parsing a bad line throws ParseError naming the line;
/// otherwise the line is skipped and counted. Duplicate titles keep the first.
inline Corpus load_corpus(const std::filesystem::path& path, LoadOptions options = {}) {
  Corpus corpus;
  LoadStats stats;
  io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    Document doc;
    try {
      doc = detail::document_from_line(line, options.raw, stats.malformed_markup);
    } catch (const std::exception& e) {
      if (options.strict) {
        throw Error(ErrorCode::kParseError,
                    path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      ++stats.skipped_lines;
      return;
    }
    if (!corpus.add(std::move(doc))) ++stats.duplicate_titles;
  });
  stats.dangling_links = corpus.resolve_links();
  corpus.mutable_stats() = stats;
  return corpus;
}

inline nlohmann::ordered_json to_json(const Document& doc) {
  nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
  for (const auto& s : doc.sentences) {
    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    for (const auto& l : s.links) {
      links.push_back({{"target", l.target}, {"anchor", l.anchor}, {"start", l.start}, {"end", l.end}});
    }
    sentences.push_back({{"text", s.text}, {"links", std::move(links)}});
  }
  return {{"title", doc.title}, {"sentences", std::move(sentences)}};
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents()) {
    out += to_json(d).dump();
    out.push_back('\n');
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  io::write_file(path, serialize_corpus(corpus));
}

}  // namespace deardr
