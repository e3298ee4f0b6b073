#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deardr/error.hpp"
#include "deardr/io.hpp"
#include "deardr/utf8.hpp"

namespace deardr {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumReserved = 4;

// Marks a whitespace character inside a tokenized title.
inline constexpr std::string_view kSpaceToken = "\xE2\x96\x81";  // U+2581

/// Token strings keyed by contiguous ids; ids 0-3 are PAD, EOS, SEP, UNK.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // tokens excludes the reserved entries. Duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (auto r : {"<pad>", "</s>", "<sep>", "<unk>"}) push(r);
    for (const auto& t : tokens) {
      if (t.empty()) throw Error(ErrorCode::kBadFormat, "empty vocabulary token");
      if (ids_.contains(t)) throw Error(ErrorCode::kBadFormat, "duplicate vocabulary token '" + t + "'");
      push(t);
    }
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw Error(ErrorCode::kInvalidArgument, "token id out of range");
    return tokens_[id];
  }

  // Looks up a non-reserved token; returns kUnk when absent.
  TokenId id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return (it == ids_.end() || it->second < kNumReserved) ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return id(token) != kUnk; }

  std::size_t max_token_length() const { return max_len_; }

  // One token per line, line number (0-based) is the id.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out.push_back('\n');
    }
    return out;
  }

  // Hex SHA-256 of serialize(); external scorers must report the same value.
  std::string hash() const { return io::sha256_hex(serialize()); }

  void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

  static Vocabulary load(const std::filesystem::path& path) {
    auto lines = io::read_lines(path);
    if (lines.size() < kNumReserved) {
      throw Error(ErrorCode::kBadFormat, "vocabulary file lacks the reserved tokens: " + path.string());
    }
    return Vocabulary(std::vector<std::string>(lines.begin() + kNumReserved, lines.end()));
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(std::string t) {
    max_len_ = std::max(max_len_, utf8::length(t));
    ids_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_len_ = 0;
};

namespace detail {

enum class PieceKind { kWord, kPunct, kSpace };

struct Piece {
  std::u32string text;
  PieceKind kind;
};

// Whitespace characters and punctuation marks stand alone; runs of anything
// else form words.
inline std::vector<Piece> split_pieces(std::u32string_view cps) {
  std::vector<Piece> out;
  for (char32_t c : cps) {
    if (utf8::is_space(c)) {
      out.push_back({std::u32string(1, c), PieceKind::kSpace});
    } else if (utf8::is_punct(c)) {
      out.push_back({std::u32string(1, c), PieceKind::kPunct});
    } else if (!out.empty() && out.back().kind == PieceKind::kWord) {
      out.back().text.push_back(c);
    } else {
      out.push_back({std::u32string(1, c), PieceKind::kWord});
    }
  }
  return out;
}

}  // namespace detail

/// Greedy longest-match subword tokenization. Text is split at whitespace and
/// punctuation boundaries; each whitespace character becomes the "▁" token and
/// word pieces are matched left to right against the vocabulary. A position
/// with no matching prefix emits UNK and advances one character.
inline std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  const std::u32string cps = utf8::decode(text);
  const std::size_t max_len = vocab.max_token_length();
  for (const auto& piece : detail::split_pieces(cps)) {
    if (piece.kind == detail::PieceKind::kSpace) {
      out.push_back(vocab.id(kSpaceToken));
      continue;
    }
    const std::u32string& w = piece.text;
    std::size_t pos = 0;
    while (pos < w.size()) {
      std::size_t len = std::min(max_len, w.size() - pos);
      TokenId found = kUnk;
      for (; len > 0; --len) {
        found = vocab.id(utf8::encode(std::u32string_view(w).substr(pos, len)));
        if (found != kUnk) break;
      }
      out.push_back(found);
      pos += found == kUnk ? 1 : len;
    }
  }
  return out;
}

/// Inverse of tokenize for fully covered text: concatenates token strings and
/// maps "▁" back to a space. Reserved ids are skipped.
inline std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id < kNumReserved) continue;
    const auto& t = vocab.token(id);
    if (t == kSpaceToken) {
      out.push_back(' ');
    } else {
      out += t;
    }
  }
  return out;
}

/// Induces a vocabulary from titles: every word and punctuation piece, every
/// single character as a fallback, and the space marker. Tokens are sorted by
/// byte order so the result does not depend on title order.
inline Vocabulary build_vocabulary(const std::vector<std::string>& titles) {
  std::set<std::string> tokens;
  for (const auto& title : titles) {
    const auto cps = utf8::decode(title);
    for (const auto& piece : detail::split_pieces(cps)) {
      if (piece.kind == detail::PieceKind::kSpace) continue;
      tokens.insert(utf8::encode(piece.text));
      for (char32_t c : piece.text) tokens.insert(utf8::encode(std::u32string(1, c)));
    }
  }
  tokens.erase(std::string(kSpaceToken));
  std::vector<std::string> ordered{std::string(kSpaceToken)};
  ordered.insert(ordered.end(), tokens.begin(), tokens.end());
  return Vocabulary(ordered);
}

}  // namespace deardr
