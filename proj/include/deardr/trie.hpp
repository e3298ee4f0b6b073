#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deardr/error.hpp"
#include "deardr/io.hpp"
#include "deardr/vocab.hpp"

namespace deardr {

// Pseudo-token returned by allowed_next when the prefix spells a full title.
// It never appears in a vocabulary.
inline constexpr TokenId kEndTitle = std::numeric_limits<TokenId>::max();

using NodeId = std::uint32_t;
inline constexpr std::uint32_t kNoTitle = std::numeric_limits<std::uint32_t>::max();

/// Prefix trie over tokenized titles. Children are kept sorted by token id so
/// iteration order is deterministic.
class TitleTrie {
 public:
  static constexpr NodeId kRoot = 0;
  static constexpr char kMagic[4] = {'D', 'R', 'T', 'R'};
  static constexpr std::uint16_t kVersion = 1;

  struct Node {
    std::vector<std::pair<TokenId, NodeId>> children;
    std::uint32_t title = kNoTitle;

    bool terminal() const { return title != kNoTitle; }
  };

  TitleTrie() : nodes_(1) {}

  // Inserts a tokenized title. Returns false if the path was already terminal.
  bool insert(std::span<const TokenId> tokens, std::string title) {
    if (tokens.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot insert an empty title");
    NodeId cur = kRoot;
    for (TokenId t : tokens) {
      if (t == kEndTitle || t < kNumReserved) {
        throw Error(ErrorCode::kInvalidArgument, "reserved token inside title '" + title + "'");
      }
      auto& kids = nodes_[cur].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), t,
                                 [](const auto& c, TokenId v) { return c.first < v; });
      if (it != kids.end() && it->first == t) {
        cur = it->second;
      } else {
        const auto next = static_cast<NodeId>(nodes_.size());
        kids.insert(it, {t, next});
        nodes_.emplace_back();
        cur = next;
      }
    }
    if (nodes_[cur].terminal()) return false;
    nodes_[cur].title = static_cast<std::uint32_t>(titles_.size());
    titles_.push_back(std::move(title));
    return true;
  }

  std::optional<NodeId> child(NodeId node, TokenId token) const {
    const auto& kids = nodes_.at(node).children;
    auto it = std::lower_bound(kids.begin(), kids.end(), token,
                               [](const auto& c, TokenId v) { return c.first < v; });
    if (it == kids.end() || it->first != token) return std::nullopt;
    return it->second;
  }

  std::optional<NodeId> find(std::span<const TokenId> prefix) const {
    NodeId cur = kRoot;
    for (TokenId t : prefix) {
      auto next = child(cur, t);
      if (!next) return std::nullopt;
      cur = *next;
    }
    return cur;
  }

  // Child token ids of node in ascending order, then kEndTitle if terminal.
  std::vector<TokenId> allowed_at(NodeId node) const {
    const auto& n = nodes_.at(node);
    std::vector<TokenId> out;
    out.reserve(n.children.size() + 1);
    for (const auto& [tok, _] : n.children) out.push_back(tok);
    if (n.terminal()) out.push_back(kEndTitle);
    return out;
  }

  std::vector<TokenId> allowed_next(std::span<const TokenId> prefix) const {
    auto node = find(prefix);
    if (!node) throw Error(ErrorCode::kInvalidPrefix, "prefix is not a path in the title trie");
    return allowed_at(*node);
  }

  bool contains(std::span<const TokenId> tokens) const {
    auto node = find(tokens);
    return node && nodes_[*node].terminal();
  }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  bool empty() const { return titles_.empty(); }
  const std::vector<std::string>& titles() const { return titles_; }
  const std::string& title(std::uint32_t id) const { return titles_.at(id); }

  std::size_t terminal_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.terminal(); }));
  }

  // Layout (little-endian):
  //   "DRTR" u16 version  u32 node_count  u32 edge_count  u32 title_count
  //   node_count x { u32 title (0xFFFFFFFF if none)  u32 first_edge  u32 child_count }
  //   edge_count x { u32 token  u32 child_node }
  //   title_count x { u32 byte_length  bytes }
  std::string serialize() const {
    io::BinaryWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u16(kVersion);
    std::uint32_t edges = 0;
    for (const auto& n : nodes_) edges += static_cast<std::uint32_t>(n.children.size());
    w.u32(static_cast<std::uint32_t>(nodes_.size()));
    w.u32(edges);
    w.u32(static_cast<std::uint32_t>(titles_.size()));
    std::uint32_t offset = 0;
    for (const auto& n : nodes_) {
      w.u32(n.title);
      w.u32(offset);
      w.u32(static_cast<std::uint32_t>(n.children.size()));
      offset += static_cast<std::uint32_t>(n.children.size());
    }
    for (const auto& n : nodes_) {
      for (const auto& [tok, child] : n.children) {
        w.u32(tok);
        w.u32(child);
      }
    }
    for (const auto& t : titles_) w.str(t);
    return w.data();
  }

  static TitleTrie deserialize(std::string_view data) {
    io::BinaryReader r(data);
    if (r.bytes(4) != std::string_view(kMagic, 4)) {
      throw Error(ErrorCode::kBadFormat, "not a title trie (bad magic)");
    }
    if (auto v = r.u16(); v != kVersion) {
      throw Error(ErrorCode::kBadFormat, "unsupported trie version " + std::to_string(v));
    }
    const auto node_count = r.u32();
    const auto edge_count = r.u32();
    const auto title_count = r.u32();
    if (node_count == 0) throw Error(ErrorCode::kBadFormat, "trie without root");
    TitleTrie trie;
    trie.nodes_.assign(node_count, Node{});
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges(node_count);
    for (auto& n : trie.nodes_) {
      n.title = r.u32();
      if (n.title != kNoTitle && n.title >= title_count) {
        throw Error(ErrorCode::kBadFormat, "title index out of range");
      }
      auto& range = ranges[static_cast<std::size_t>(&n - trie.nodes_.data())];
      range.first = r.u32();
      range.second = r.u32();
    }
    std::vector<std::pair<TokenId, NodeId>> edges(edge_count);
    for (auto& e : edges) {
      e.first = r.u32();
      e.second = r.u32();
      if (e.second == kRoot || e.second >= node_count) {
        throw Error(ErrorCode::kBadFormat, "edge points outside the node array");
      }
    }
    for (std::size_t i = 0; i < node_count; ++i) {
      const auto [first, count] = ranges[i];
      if (static_cast<std::uint64_t>(first) + count > edge_count) {
        throw Error(ErrorCode::kBadFormat, "child table out of range");
      }
      trie.nodes_[i].children.assign(edges.begin() + first, edges.begin() + first + count);
      if (!std::is_sorted(trie.nodes_[i].children.begin(), trie.nodes_[i].children.end())) {
        throw Error(ErrorCode::kBadFormat, "children not sorted");
      }
    }
    trie.titles_.reserve(title_count);
    for (std::uint32_t i = 0; i < title_count; ++i) trie.titles_.push_back(r.str());
    if (!r.done()) throw Error(ErrorCode::kBadFormat, "trailing bytes after trie");
    return trie;
  }

  void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }
  static TitleTrie load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::string> titles_;
};

/// Builds the decoding index from normalized, distinct titles. Every title
/// must tokenize without UNK.
inline TitleTrie build_trie(const std::vector<std::string>& titles, const Vocabulary& vocab) {
  TitleTrie trie;
  for (const auto& title : titles) {
    const auto ids = tokenize(title, vocab);
    if (ids.empty()) throw Error(ErrorCode::kInvalidArgument, "empty title");
    if (std::find(ids.begin(), ids.end(), kUnk) != ids.end()) {
      throw Error(ErrorCode::kUnkInTitle, "title '" + title + "' is not covered by the vocabulary");
    }
    if (!trie.insert(ids, title)) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate title '" + title + "'");
    }
  }
  return trie;
}

}  // namespace deardr
