#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "deardr/error.hpp"
#include "deardr/utf8.hpp"
#include "deardr/vocab.hpp"

namespace deardr {

/// Supplies p(next token | prefix, input) restricted to a candidate set.
/// Implementations return unnormalized log-scores aligned with `allowed`;
/// score_step normalizes them.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::vector<double> score(std::string_view input, std::span<const TokenId> prefix,
                                    std::span<const TokenId> allowed) = 0;

  // True when one instance may serve several threads at once.
  virtual bool shareable() const { return true; }
};

// Natural-log probabilities over exactly the ids that were allowed.
struct ScorerOutput {
  std::vector<TokenId> ids;
  std::vector<double> logprobs;

  double at(TokenId id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw Error(ErrorCode::kInvalidArgument, "token not in scorer output");
    return logprobs[static_cast<std::size_t>(it - ids.begin())];
  }
};

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

inline ScorerOutput score_step(Scorer& scorer, std::string_view input,
                               std::span<const TokenId> prefix, std::span<const TokenId> allowed) {
  if (allowed.empty()) throw Error(ErrorCode::kInvalidArgument, "score_step with empty allowed set");
  ScorerOutput out;
  out.ids.assign(allowed.begin(), allowed.end());
  out.logprobs = scorer.score(input, prefix, allowed);
  if (out.logprobs.size() != allowed.size()) {
    throw Error(ErrorCode::kScorerProtocolError, "scorer returned the wrong number of scores");
  }
  for (double v : out.logprobs) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kScorerProtocolError, "scorer returned a non-finite score");
  }
  const double z = log_sum_exp(out.logprobs);
  for (auto& v : out.logprobs) v = std::min(0.0, v - z);
  return out;
}

class UniformScorer final : public Scorer {
 public:
  std::vector<double> score(std::string_view, std::span<const TokenId>,
                            std::span<const TokenId> allowed) override {
    return std::vector<double>(allowed.size(), 0.0);
  }
};

/// Query-side features for lexical scoring: lowercased words and every
/// character 1-, 2- and 3-gram of the lowercased query.
class LexicalQuery {
 public:
  explicit LexicalQuery(std::string_view query) {
    const std::u32string q = lower_cps(query);
    for (std::size_t n = 1; n <= 3; ++n) {
      for (std::size_t i = 0; i + n <= q.size(); ++i) grams_.insert(q.substr(i, n));
    }
    std::u32string cur;
    for (char32_t c : q) {
      if (utf8::is_alnum(c)) {
        cur.push_back(c);
      } else if (!cur.empty()) {
        words_.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words_.push_back(std::move(cur));
  }

  // Distinct 3-grams of the token (or the whole token when shorter than 3)
  // that occur in the query and not already in `covered`.
  std::size_t overlap(std::u32string_view token, std::u32string_view covered = {}) const {
    if (token.empty()) return 0;
    const std::size_t n = std::min<std::size_t>(3, token.size());
    std::unordered_set<std::u32string> seen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i + n <= token.size(); ++i) {
      std::u32string g(token.substr(i, n));
      if (seen.insert(g).second && grams_.contains(g) && covered.find(g) == std::u32string_view::npos) ++hits;
    }
    return hits;
  }

  bool is_word_prefix(std::u32string_view s) const {
    return std::any_of(words_.begin(), words_.end(),
                       [&](const auto& w) { return w.size() >= s.size() && w.compare(0, s.size(), s) == 0; });
  }

  bool is_word(std::u32string_view s) const {
    return std::any_of(words_.begin(), words_.end(), [&](const auto& w) { return w == s; });
  }

  // True when s is a query word followed by at least one more word.
  bool is_inner_word(std::u32string_view s) const {
    for (std::size_t i = 0; i + 1 < words_.size(); ++i) {
      if (words_[i] == s) return true;
    }
    return false;
  }

  static std::u32string lower_cps(std::string_view s) {
    std::u32string cps = utf8::decode(s);
    for (auto& c : cps) c = utf8::to_lower(c);
    return cps;
  }

 private:
  std::unordered_set<std::u32string> grams_;
  std::vector<std::u32string> words_;
};

inline constexpr double kLexicalContinuationWeight = 0.5;

/// Raw lexical score of appending `token` to the title decoded so far
/// (`title_prefix`): count of query 3-grams the token adds that the title
/// does not contain yet, plus a bonus when the
/// token extends the trailing partial word into a prefix of a query word.
/// The space marker earns the bonus when it closes a query word that has a
/// successor, and the end markers (EOS/SEP, passed as an empty token with
/// `is_end`) when the title ends on a whole query word.
inline double lexical_score(const LexicalQuery& query, std::string_view token,
                            std::string_view title_prefix, bool is_end = false) {
  std::u32string prefix = LexicalQuery::lower_cps(title_prefix);
  std::size_t cut = prefix.size();
  while (cut > 0 && utf8::is_alnum(prefix[cut - 1])) --cut;
  const std::u32string trailing = prefix.substr(cut);

  if (is_end) {
    return (!trailing.empty() && query.is_word(trailing)) ? kLexicalContinuationWeight : 0.0;
  }
  if (token == kSpaceToken) {
    return (!trailing.empty() && query.is_inner_word(trailing)) ? kLexicalContinuationWeight : 0.0;
  }
  const std::u32string tok = LexicalQuery::lower_cps(token);
  double raw = static_cast<double>(query.overlap(tok, prefix));
  const bool wordy = !tok.empty() && std::all_of(tok.begin(), tok.end(), utf8::is_alnum);
  if (wordy && query.is_word_prefix(trailing + tok)) raw += kLexicalContinuationWeight;
  return raw;
}

/// Desk-scale stand-in for a trained model: softmax over lexical_score.
class LexicalScorer final : public Scorer {
 public:
  explicit LexicalScorer(const Vocabulary& vocab) : vocab_(vocab) {}

  std::vector<double> score(std::string_view input, std::span<const TokenId> prefix,
                            std::span<const TokenId> allowed) override {
    const LexicalQuery q(input);
    auto last_sep = std::find(prefix.rbegin(), prefix.rend(), kSep);
    const auto title_tokens = prefix.subspan(static_cast<std::size_t>(prefix.rend() - last_sep));
    const std::string title_prefix = detokenize(title_tokens, vocab_);
    std::vector<double> out;
    out.reserve(allowed.size());
    for (TokenId id : allowed) {
      if (id == kEos || id == kSep) {
        out.push_back(lexical_score(q, {}, title_prefix, true));
      } else if (id < kNumReserved) {
        out.push_back(0.0);
      } else {
        out.push_back(lexical_score(q, vocab_.token(id), title_prefix));
      }
    }
    return out;
  }

 private:
  const Vocabulary& vocab_;
};

/// Test scorer that knows the gold token path for each input and puts all
/// probability mass on it. Off-path prefixes are scored uniformly.
class OracleScorer final : public Scorer {
 public:
  static constexpr double kOffPath = -1.0e6;

  void add(std::string input, std::vector<TokenId> gold_path) {
    gold_.insert_or_assign(std::move(input), std::move(gold_path));
  }

  // Gold path for an ordered title list: each title's tokens, SEP between
  // titles, EOS at the end.
  static std::vector<TokenId> path_for(const std::vector<std::string>& titles, const Vocabulary& vocab) {
    std::vector<TokenId> path;
    for (std::size_t i = 0; i < titles.size(); ++i) {
      if (i > 0) path.push_back(kSep);
      auto ids = tokenize(titles[i], vocab);
      path.insert(path.end(), ids.begin(), ids.end());
    }
    path.push_back(kEos);
    return path;
  }

  std::vector<double> score(std::string_view input, std::span<const TokenId> prefix,
                            std::span<const TokenId> allowed) override {
    std::vector<double> out(allowed.size(), 0.0);
    auto it = gold_.find(std::string(input));
    if (it == gold_.end()) return out;
    const auto& path = it->second;
    if (prefix.size() >= path.size() || !std::equal(prefix.begin(), prefix.end(), path.begin())) {
      return out;
    }
    const TokenId want = path[prefix.size()];
    if (std::find(allowed.begin(), allowed.end(), want) == allowed.end()) return out;
    for (std::size_t i = 0; i < allowed.size(); ++i) out[i] = allowed[i] == want ? 0.0 : kOffPath;
    return out;
  }

 private:
  std::map<std::string, std::vector<TokenId>, std::less<>> gold_;
};

}  // namespace deardr
