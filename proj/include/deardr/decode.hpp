#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "deardr/error.hpp"
#include "deardr/scorer.hpp"
#include "deardr/trie.hpp"
#include "deardr/vocab.hpp"

namespace deardr {

struct Hypothesis {
  std::vector<TokenId> tokens;
  double logscore = 0.0;
  std::vector<std::string> completed;
  bool finished = false;

  // Cumulative log-probability, divided by the token count when normalizing.
  double score(bool length_norm = true) const {
    if (!length_norm || tokens.empty()) return logscore;
    return logscore / static_cast<double>(tokens.size());
  }
};

struct BeamOptions {
  std::size_t beam = 10;
  std::size_t max_titles = 5;
  std::size_t max_len = 64;
  bool length_norm = true;
};

/// Restricts decoding to paths of the title trie.
class TrieConstraint {
 public:
  using State = NodeId;

  explicit TrieConstraint(const TitleTrie& trie) : trie_(trie) {
    if (trie.empty()) throw Error(ErrorCode::kEmptyTrie, "cannot decode against an empty title trie");
  }

  State root() const { return TitleTrie::kRoot; }

  // Fills the child tokens of state; returns whether a title ends here.
  bool next(State s, std::vector<TokenId>& children) const {
    children.clear();
    const auto& n = trie_.node(s);
    for (const auto& [tok, _] : n.children) children.push_back(tok);
    return n.terminal();
  }

  State advance(State s, TokenId tok) const { return *trie_.child(s, tok); }

  std::string title(State s, std::span<const TokenId>) const { return trie_.title(trie_.node(s).title); }

 private:
  const TitleTrie& trie_;
};

/// No index: any non-reserved vocabulary token may follow, and a title may
/// end after at least one token. Used to measure what the trie buys.
class FreeConstraint {
 public:
  using State = std::uint32_t;  // tokens in the current title

  explicit FreeConstraint(const Vocabulary& vocab) : vocab_(vocab) {
    for (TokenId id = kNumReserved; id < vocab.size(); ++id) all_.push_back(id);
    if (all_.empty()) throw Error(ErrorCode::kEmptyTrie, "vocabulary has no tokens");
  }

  State root() const { return 0; }

  bool next(State s, std::vector<TokenId>& children) const {
    children = all_;
    return s > 0;
  }

  State advance(State s, TokenId) const { return s + 1; }

  std::string title(State, std::span<const TokenId> title_tokens) const {
    return detokenize(title_tokens, vocab_);
  }

 private:
  const Vocabulary& vocab_;
  std::vector<TokenId> all_;
};

namespace detail {

// Descending score, then completed titles, then token ids, both ascending.
inline bool hyp_before(const Hypothesis& a, const Hypothesis& b, bool length_norm) {
  const double sa = a.score(length_norm);
  const double sb = b.score(length_norm);
  if (sa != sb) return sa > sb;
  if (a.completed != b.completed) return a.completed < b.completed;
  return a.tokens < b.tokens;
}

template <typename State>
struct BeamEntry {
  Hypothesis hyp;
  State state{};
  std::size_t title_start = 0;
};

}  // namespace detail

/// Constrained beam search. Each live hypothesis is expanded over the tokens
/// the constraint allows; where a title may end, EOS is offered and SEP too
/// while fewer than max_titles titles would be complete. The scorer ranks
/// the end markers like any other token. The best `beam` hypotheses by
/// (length-normalized) score survive each step and finished ones keep
/// competing. Returned hypotheses are finished or hit max_len, best first.
template <typename Constraint>
std::vector<Hypothesis> beam_search(Scorer& scorer, const Constraint& constraint,
                                    std::string_view input, const BeamOptions& opts) {
  if (opts.beam == 0) throw Error(ErrorCode::kInvalidArgument, "beam must be >= 1");
  if (opts.max_titles == 0) throw Error(ErrorCode::kInvalidArgument, "max_titles must be >= 1");
  using Entry = detail::BeamEntry<typename Constraint::State>;
  const bool norm = opts.length_norm;

  std::vector<Entry> beam(1);
  beam[0].state = constraint.root();

  std::vector<TokenId> children;
  std::vector<TokenId> allowed;
  struct Cand {
    double lp;
    TokenId tok;
    int kind;  // 0 title token, 1 EOS, 2 SEP
  };
  std::vector<Cand> cands;

  for (std::size_t step = 0; step < opts.max_len; ++step) {
    std::vector<Entry> next;
    bool any_live = false;
    for (auto& e : beam) {
      if (e.hyp.finished) {
        next.push_back(std::move(e));
        continue;
      }
      any_live = true;
      const bool can_end = constraint.next(e.state, children);
      allowed = children;
      if (can_end) {
        allowed.push_back(kEos);
        if (e.hyp.completed.size() + 1 < opts.max_titles) allowed.push_back(kSep);
      }
      if (allowed.empty()) continue;
      const auto out = score_step(scorer, input, e.hyp.tokens, allowed);

      cands.clear();
      for (std::size_t i = 0; i < allowed.size(); ++i) {
        const TokenId t = allowed[i];
        const int kind = t == kEos ? 1 : (t == kSep && i >= children.size()) ? 2 : 0;
        cands.push_back({out.logprobs[i], t, kind});
      }
      // Among siblings this order agrees with hyp_before, so only the best
      // `beam` of them can survive.
      const std::size_t keep = std::min(opts.beam, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                        [](const Cand& a, const Cand& b) {
                          return std::tie(b.lp, a.kind, a.tok) < std::tie(a.lp, b.kind, b.tok);
                        });
      for (std::size_t i = 0; i < keep; ++i) {
        const Cand& c = cands[i];
        Entry child;
        child.hyp = e.hyp;
        child.hyp.tokens.push_back(c.tok);
        child.hyp.logscore += c.lp;
        child.title_start = e.title_start;
        child.state = e.state;
        if (c.kind == 0) {
          child.state = constraint.advance(e.state, c.tok);
        } else {
          const std::span<const TokenId> title_tokens(e.hyp.tokens.data() + e.title_start,
                                                      e.hyp.tokens.size() - e.title_start);
          child.hyp.completed.push_back(constraint.title(e.state, title_tokens));
          if (c.kind == 1) {
            child.hyp.finished = true;
          } else {
            child.state = constraint.root();
            child.title_start = child.hyp.tokens.size();
          }
        }
        next.push_back(std::move(child));
      }
    }
    if (!any_live) break;
    const std::size_t keep = std::min(opts.beam, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end(),
                      [norm](const Entry& a, const Entry& b) { return detail::hyp_before(a.hyp, b.hyp, norm); });
    next.resize(keep);
    beam = std::move(next);
    if (std::all_of(beam.begin(), beam.end(), [](const Entry& e) { return e.hyp.finished; })) break;
  }

  std::vector<Hypothesis> result;
  result.reserve(beam.size());
  for (auto& e : beam) result.push_back(std::move(e.hyp));
  std::sort(result.begin(), result.end(),
            [norm](const Hypothesis& a, const Hypothesis& b) { return detail::hyp_before(a, b, norm); });
  return result;
}

inline std::vector<Hypothesis> beam_search(Scorer& scorer, const TitleTrie& trie, std::string_view input,
                                           const BeamOptions& opts) {
  return beam_search(scorer, TrieConstraint(trie), input, opts);
}

struct ScoredTitle {
  std::string title;
  double score = 0.0;

  friend bool operator==(const ScoredTitle&, const ScoredTitle&) = default;
};

struct RankedResult {
  std::string id;
  std::vector<ScoredTitle> ranked;
};

inline constexpr double kPositionPenalty = 1e-6;

/// Document-level ranking from one query's beam: each title scores the max
/// over hypotheses containing it of (hypothesis score - 1e-6 * position in
/// that hypothesis's title sequence). Descending, ties by title.
inline std::vector<ScoredTitle> aggregate(const std::vector<Hypothesis>& hyps, bool length_norm = true,
                                          double position_penalty = kPositionPenalty) {
  std::map<std::string, double> best;
  for (const auto& h : hyps) {
    const double base = h.score(length_norm);
    for (std::size_t pos = 0; pos < h.completed.size(); ++pos) {
      const double s = base - position_penalty * static_cast<double>(pos);
      auto [it, inserted] = best.try_emplace(h.completed[pos], s);
      if (!inserted && s > it->second) it->second = s;
    }
  }
  std::vector<ScoredTitle> out;
  out.reserve(best.size());
  for (auto& [title, score] : best) out.push_back({title, score});
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredTitle& a, const ScoredTitle& b) { return a.score > b.score; });
  return out;
}

inline nlohmann::ordered_json to_json(const RankedResult& r) {
  nlohmann::ordered_json ranked = nlohmann::ordered_json::array();
  for (const auto& st : r.ranked) ranked.push_back({{"title", st.title}, {"score", st.score}});
  return {{"id", r.id}, {"ranked", std::move(ranked)}};
}

inline RankedResult ranked_result_from_json(const nlohmann::json& js) {
  RankedResult r;
  const auto& id = js.at("id");
  r.id = id.is_string() ? id.get<std::string>() : id.dump();
  for (const auto& e : js.at("ranked")) {
    r.ranked.push_back({e.at("title").get<std::string>(), e.value("score", 0.0)});
  }
  return r;
}

}  // namespace deardr
