#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deardr/corpus.hpp"
#include "deardr/decode.hpp"
#include "deardr/error.hpp"
#include "deardr/io.hpp"
#include "deardr/utf8.hpp"

namespace deardr {

// Lowercase, split on anything that is not a letter or digit.
inline std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> out;
  std::u32string cur;
  for (char32_t c : utf8::decode(text)) {
    if (utf8::is_alnum(c)) {
      cur.push_back(utf8::to_lower(c));
    } else if (!cur.empty()) {
      out.push_back(utf8::encode(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(utf8::encode(cur));
  return out;
}

enum class IndexKind : std::uint8_t { kBm25 = 0, kTfidf = 1 };

struct Posting {
  std::uint32_t doc = 0;
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Term -> postings over documents indexed as title plus all sentence text.
/// Postings are sorted by document id (the corpus insertion order).
class InvertedIndex {
 public:
  static constexpr char kMagic[4] = {'D', 'R', 'I', 'X'};
  static constexpr std::uint16_t kVersion = 1;

  static InvertedIndex build(const Corpus& corpus, IndexKind kind = IndexKind::kBm25) {
    if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot index an empty corpus");
    InvertedIndex idx;
    idx.kind_ = kind;
    for (const auto& doc : corpus.documents()) {
      const auto id = static_cast<std::uint32_t>(idx.titles_.size());
      idx.titles_.push_back(doc.title);
      std::map<std::string, std::uint32_t> tf;
      std::uint32_t len = 0;
      auto add = [&](std::string_view text) {
        for (auto& term : analyze(text)) {
          ++tf[std::move(term)];
          ++len;
        }
      };
      add(doc.title);
      for (const auto& s : doc.sentences) add(s.text);
      idx.doc_len_.push_back(len);
      for (auto& [term, n] : tf) idx.postings_[term].push_back({id, n});
    }
    idx.finish();
    return idx;
  }

  IndexKind kind() const { return kind_; }
  std::size_t doc_count() const { return titles_.size(); }
  double avg_len() const { return avg_len_; }
  const std::vector<std::string>& titles() const { return titles_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_len_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }

  const std::vector<Posting>* find(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
  }

  // ln(N / df); zero for terms present in every document.
  double tfidf_idf(std::size_t df) const {
    return std::log(static_cast<double>(doc_count()) / static_cast<double>(df));
  }

  double bm25_idf(std::size_t df) const {
    const double n = static_cast<double>(doc_count());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
  }

  // L2 norm of the document's ltc vector.
  double tfidf_norm(std::uint32_t doc) const { return tfidf_norm_.at(doc); }

  // Layout (little-endian):
  //   "DRIX" u16 version  u8 kind  u32 doc_count
  //   doc_count x { u32 byte_length  title bytes  u32 doc_length }
  //   u32 term_count
  //   term_count x { u32 byte_length  term bytes  u32 posting_count
  //                  posting_count x { u32 doc  u32 tf } }
  std::string serialize() const {
    io::BinaryWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u16(kVersion);
    w.u8(static_cast<std::uint8_t>(kind_));
    w.u32(static_cast<std::uint32_t>(titles_.size()));
    for (std::size_t i = 0; i < titles_.size(); ++i) {
      w.str(titles_[i]);
      w.u32(doc_len_[i]);
    }
    w.u32(static_cast<std::uint32_t>(postings_.size()));
    for (const auto& [term, plist] : postings_) {
      w.str(term);
      w.u32(static_cast<std::uint32_t>(plist.size()));
      for (const auto& p : plist) {
        w.u32(p.doc);
        w.u32(p.tf);
      }
    }
    return w.data();
  }

  static InvertedIndex deserialize(std::string_view data) {
    io::BinaryReader r(data);
    if (r.bytes(4) != std::string_view(kMagic, 4)) {
      throw Error(ErrorCode::kBadFormat, "not an inverted index (bad magic)");
    }
    if (auto v = r.u16(); v != kVersion) {
      throw Error(ErrorCode::kBadFormat, "unsupported index version " + std::to_string(v));
    }
    InvertedIndex idx;
    const auto kind = r.u8();
    if (kind > 1) throw Error(ErrorCode::kBadFormat, "unknown index kind");
    idx.kind_ = static_cast<IndexKind>(kind);
    const auto n = r.u32();
    if (n == 0) throw Error(ErrorCode::kBadFormat, "index without documents");
    for (std::uint32_t i = 0; i < n; ++i) {
      idx.titles_.push_back(r.str());
      idx.doc_len_.push_back(r.u32());
    }
    std::vector<std::uint64_t> recount(n, 0);
    const auto terms = r.u32();
    for (std::uint32_t i = 0; i < terms; ++i) {
      auto term = r.str();
      auto& plist = idx.postings_[term];
      const auto np = r.u32();
      for (std::uint32_t j = 0; j < np; ++j) {
        Posting p{r.u32(), r.u32()};
        if (p.doc >= n || p.tf == 0 || (!plist.empty() && plist.back().doc >= p.doc)) {
          throw Error(ErrorCode::kBadFormat, "invalid postings for term '" + term + "'");
        }
        recount[p.doc] += p.tf;
        plist.push_back(p);
      }
    }
    if (!r.done()) throw Error(ErrorCode::kBadFormat, "trailing bytes after index");
    for (std::uint32_t i = 0; i < n; ++i) {
      if (recount[i] != idx.doc_len_[i]) {
        throw Error(ErrorCode::kBadFormat, "stored length of document " + std::to_string(i) + " is inconsistent");
      }
    }
    idx.finish();
    return idx;
  }

  void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }
  static InvertedIndex load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

 private:
  void finish() {
    double total = 0.0;
    for (auto l : doc_len_) total += l;
    avg_len_ = titles_.empty() ? 0.0 : total / static_cast<double>(titles_.size());
    std::vector<double> sq(titles_.size(), 0.0);
    for (const auto& [term, plist] : postings_) {
      const double idf = tfidf_idf(plist.size());
      for (const auto& p : plist) {
        const double w = (1.0 + std::log(static_cast<double>(p.tf))) * idf;
        sq[p.doc] += w * w;
      }
    }
    tfidf_norm_.resize(sq.size());
    std::transform(sq.begin(), sq.end(), tfidf_norm_.begin(), [](double v) { return std::sqrt(v); });
  }

  IndexKind kind_ = IndexKind::kBm25;
  std::vector<std::string> titles_;
  std::vector<std::uint32_t> doc_len_;
  std::map<std::string, std::vector<Posting>> postings_;
  double avg_len_ = 0.0;
  std::vector<double> tfidf_norm_;
};

namespace detail {

inline std::vector<ScoredTitle> top_k(const InvertedIndex& index,
                                      const std::unordered_map<std::uint32_t, double>& scores,
                                      std::size_t k) {
  std::vector<ScoredTitle> out;
  out.reserve(scores.size());
  for (const auto& [doc, s] : scores) {
    if (s > 0.0) out.push_back({index.titles()[doc], s});
  }
  auto before = [](const ScoredTitle& a, const ScoredTitle& b) {
    return a.score != b.score ? a.score > b.score : a.title < b.title;
  };
  const std::size_t keep = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), before);
  out.resize(keep);
  return out;
}

}  // namespace detail

/// Okapi BM25 over the distinct query terms:
///   sum_t idf(t) * tf / (tf + k1 * (1 - b + b * len / avglen)),
///   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
/// Only documents containing a query term are ranked.
inline std::vector<ScoredTitle> bm25_search(const InvertedIndex& index, std::string_view query,
                                            std::size_t k, Bm25Params params = {}) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  const auto terms = analyze(query);
  const std::set<std::string> unique(terms.begin(), terms.end());
  std::unordered_map<std::uint32_t, double> scores;
  for (const auto& term : unique) {
    const auto* plist = index.find(term);
    if (plist == nullptr) continue;
    const double idf = index.bm25_idf(plist->size());
    for (const auto& p : *plist) {
      const double tf = p.tf;
      const double len = index.doc_lengths()[p.doc];
      const double denom = tf + params.k1 * (1.0 - params.b + params.b * len / index.avg_len());
      scores[p.doc] += idf * tf / denom;
    }
  }
  return detail::top_k(index, scores, k);
}

/// Cosine similarity of ltc vectors: weight (1 + ln tf) * ln(N / df), L2
/// normalized on both sides. Query terms absent from the index are ignored.
inline std::vector<ScoredTitle> tfidf_search(const InvertedIndex& index, std::string_view query,
                                             std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::map<std::string, std::uint32_t> qtf;
  for (auto& t : analyze(query)) ++qtf[std::move(t)];
  std::vector<std::pair<const std::vector<Posting>*, double>> qvec;
  double qnorm = 0.0;
  for (const auto& [term, tf] : qtf) {
    const auto* plist = index.find(term);
    if (plist == nullptr) continue;
    const double w = (1.0 + std::log(static_cast<double>(tf))) * index.tfidf_idf(plist->size());
    qvec.emplace_back(plist, w);
    qnorm += w * w;
  }
  std::unordered_map<std::uint32_t, double> scores;
  if (qnorm > 0.0) {
    qnorm = std::sqrt(qnorm);
    for (const auto& [plist, wq] : qvec) {
      const double idf = index.tfidf_idf(plist->size());
      for (const auto& p : *plist) {
        const double dn = index.tfidf_norm(p.doc);
        if (dn == 0.0) continue;
        const double wd = (1.0 + std::log(static_cast<double>(p.tf))) * idf;
        scores[p.doc] += (wq / qnorm) * (wd / dn);
      }
    }
  }
  auto out = detail::top_k(index, scores, k);
  for (auto& st : out) st.score = std::min(st.score, 1.0);
  return out;
}

}  // namespace deardr
