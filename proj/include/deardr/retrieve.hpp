#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "deardr/decode.hpp"
#include "deardr/scorer.hpp"
#include "deardr/trie.hpp"
#include "deardr/vocab.hpp"

namespace deardr {

struct Query {
  std::string id;
  std::string text;
};

using ScorerFactory = std::function<std::unique_ptr<Scorer>()>;

struct RetrieveOptions {
  BeamOptions beam;
  // Decode over the whole vocabulary instead of the trie, then drop outputs
  // that are not titles.
  bool unconstrained = false;
  std::size_t workers = 1;
};

struct RetrieveStats {
  std::size_t invalid_titles = 0;
};

/// Decodes one query and aggregates its beam into a document ranking.
inline RankedResult retrieve_one(Scorer& scorer, const TitleTrie& trie, const Vocabulary& vocab,
                                 const Query& q, const RetrieveOptions& opts, std::size_t* invalid = nullptr) {
  RankedResult r;
  r.id = q.id;
  if (!opts.unconstrained) {
    r.ranked = aggregate(beam_search(scorer, TrieConstraint(trie), q.text, opts.beam), opts.beam.length_norm);
    return r;
  }
  const auto ranked = aggregate(beam_search(scorer, FreeConstraint(vocab), q.text, opts.beam), opts.beam.length_norm);
  const std::unordered_set<std::string> valid(trie.titles().begin(), trie.titles().end());
  for (const auto& st : ranked) {
    if (valid.contains(st.title)) {
      r.ranked.push_back(st);
    } else if (invalid) {
      ++*invalid;
    }
  }
  return r;
}

/// Runs queries on `workers` threads, each with its own scorer from the
/// factory (for external scorers, one connection per worker). Results come
/// back in query order whatever the completion order.
inline std::vector<RankedResult> retrieve_all(const ScorerFactory& make_scorer, const TitleTrie& trie,
                                              const Vocabulary& vocab, const std::vector<Query>& queries,
                                              const RetrieveOptions& opts, RetrieveStats* stats = nullptr) {
  std::vector<RankedResult> out(queries.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, queries.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> invalid{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    try {
      auto scorer = make_scorer();
      std::size_t local_invalid = 0;
      for (std::size_t i = next++; i < queries.size(); i = next++) {
        out[i] = retrieve_one(*scorer, trie, vocab, queries[i], opts, &local_invalid);
      }
      invalid += local_invalid;
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = queries.size();
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  if (stats) stats->invalid_titles = invalid;
  return out;
}

}  // namespace deardr
