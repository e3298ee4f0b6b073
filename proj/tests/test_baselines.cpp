#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "deardr/baselines.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deardr;
using testing_support::TempDir;

namespace {

Corpus corpus_of(const std::vector<std::pair<std::string, std::string>>& docs) {
  Corpus c;
  for (const auto& [title, text] : docs) c.add({title, {{text, {}}}});
  return c;
}

std::string random_text(testing_support::Gen& g, std::size_t max_words) {
  static const char* kWords[] = {"cat", "dog", "the", "war", "river", "king", "paris", "emperor", "island",
                                 "battle", "sea", "old", "Napoleon", "über", "ÉCOLE", "x1"};
  std::string s;
  const std::size_t n = testing_support::uniform(g, 1, max_words);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += (g() % 6 == 0) ? ", " : " ";
    s += kWords[g() % 16];
  }
  return s;
}

void expect_matches_oracle(const InvertedIndex& idx, const std::vector<ScoredTitle>& got,
                           const std::vector<double>& want, std::size_t k) {
  std::vector<std::pair<double, std::string>> expected;
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i] > 1e-12) expected.push_back({want[i], idx.titles()[i]});
  }
  std::sort(expected.begin(), expected.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  ASSERT_EQ(got.size(), std::min(k, expected.size()));
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got[i].score, expected[i].first, 1e-9);
    if (i > 0) EXPECT_GE(got[i - 1].score, got[i].score);
  }
  // Same title set up to near-ties at the cut.
  for (const auto& st : got) {
    const auto pos = std::find(idx.titles().begin(), idx.titles().end(), st.title) - idx.titles().begin();
    EXPECT_NEAR(st.score, want[static_cast<std::size_t>(pos)], 1e-9) << st.title;
  }
}

}  // namespace

TEST(Analyze, LowercasesAndSplits) {
  EXPECT_EQ(analyze("The Cat, the DOG!"), (std::vector<std::string>{"the", "cat", "the", "dog"}));
  EXPECT_EQ(analyze("École x1-y2"), (std::vector<std::string>{"école", "x1", "y2"}));
  EXPECT_TRUE(analyze(" ,.; ").empty());
}

TEST(InvertedIndex, CountsExample) {
  const auto idx = InvertedIndex::build(corpus_of({{"A", "x y x"}}));
  EXPECT_EQ(idx.postings().at("x"), (std::vector<Posting>{{0, 2}}));
  EXPECT_EQ(idx.postings().at("y"), (std::vector<Posting>{{0, 1}}));
  EXPECT_EQ(idx.postings().at("a"), (std::vector<Posting>{{0, 1}}));
  EXPECT_EQ(idx.doc_lengths()[0], 4u);
}

TEST(InvertedIndex, AverageLength) {
  const auto idx = InvertedIndex::build(corpus_of({{"A", "b c d"}, {"E", "f g h i j"}}));
  EXPECT_DOUBLE_EQ(idx.avg_len(), 5.0);
}

TEST(InvertedIndex, EmptyCorpusRejected) {
  try {
    InvertedIndex::build(Corpus{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyCorpus);
  }
}

TEST(InvertedIndex, DeterministicAndRoundTrips) {
  TempDir tmp;
  const auto c = load_corpus(DEARDR_TOY_DIR "/pages.jsonl", {.raw = true});
  for (IndexKind kind : {IndexKind::kBm25, IndexKind::kTfidf}) {
    const auto a = InvertedIndex::build(c, kind);
    const auto b = InvertedIndex::build(c, kind);
    EXPECT_EQ(a.serialize(), b.serialize());
    a.save(tmp / "i.idx");
    const auto back = InvertedIndex::load(tmp / "i.idx");
    EXPECT_EQ(back.serialize(), a.serialize());
    EXPECT_EQ(back.kind(), kind);
    EXPECT_DOUBLE_EQ(back.avg_len(), a.avg_len());
    for (std::size_t i = 0; i < a.doc_count(); ++i) {
      EXPECT_EQ(back.tfidf_norm(static_cast<std::uint32_t>(i)), a.tfidf_norm(static_cast<std::uint32_t>(i)));
    }
    for (const auto& [term, plist] : a.postings()) {
      EXPECT_TRUE(std::is_sorted(plist.begin(), plist.end(),
                                 [](const Posting& x, const Posting& y) { return x.doc < y.doc; }));
    }
  }
}

TEST(InvertedIndex, InconsistentLengthsRejected) {
  auto data = InvertedIndex::build(corpus_of({{"A", "x y"}})).serialize();
  EXPECT_EQ(data.substr(0, 4), "DRIX");
  // doc_length of doc 0 sits after magic(4) version(2) kind(1) count(4) len(4) "A"(1).
  data[16] = 9;
  try {
    InvertedIndex::deserialize(data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadFormat);
  }
  EXPECT_THROW(InvertedIndex::deserialize("DRIX"), Error);
}

TEST(Bm25, Examples) {
  const auto c = corpus_of({{"D1", "cat cat cat a b c d e f"},
                            {"D2", "cat a b c d e f g h"},
                            {"D3", "a b c d e f g h i"}});
  const auto idx = InvertedIndex::build(c);
  ASSERT_EQ(idx.doc_lengths()[0], 10u);
  ASSERT_EQ(idx.doc_lengths()[1], 10u);
  const auto r = bm25_search(idx, "cat", 10);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].title, "D1");
  EXPECT_EQ(r[1].title, "D2");
  EXPECT_TRUE(bm25_search(idx, "zebra", 10).empty());
  EXPECT_TRUE(bm25_search(idx, "", 10).empty());
  EXPECT_THROW(bm25_search(idx, "cat", 0), Error);
}

TEST(Bm25, MatchesDirectFormula) {
  testing_support::Gen g(1234);
  for (int iter = 0; iter < 200; ++iter) {
    Corpus c;
    const std::size_t n = testing_support::uniform(g, 1, 100);
    for (std::size_t i = 0; i < n; ++i) c.add({"Doc " + std::to_string(i), {{random_text(g, 30), {}}}});
    const auto idx = InvertedIndex::build(c);
    const Bm25Params p{0.5 + static_cast<double>(g() % 20) / 10.0, static_cast<double>(g() % 11) / 10.0};
    const std::string q = random_text(g, 6);
    const std::size_t k = testing_support::uniform(g, 1, 120);
    expect_matches_oracle(idx, bm25_search(idx, q, k, p), oracles::bm25(c, q, p.k1, p.b), k);
  }
}

// Raising one document's tf for a query term (its length held fixed) never
// lowers its score.
TEST(Bm25, MonotoneInTf) {
  for (int tf = 0; tf < 8; ++tf) {
    std::string a, b;
    for (int i = 0; i < 10; ++i) a += i < tf ? "cat " : "pad ";
    for (int i = 0; i < 10; ++i) b += i <= tf ? "cat " : "pad ";
    const auto lo = bm25_search(InvertedIndex::build(corpus_of({{"D", a}, {"E", "cat dog"}, {"F", "x"}})), "cat", 5);
    const auto hi = bm25_search(InvertedIndex::build(corpus_of({{"D", b}, {"E", "cat dog"}, {"F", "x"}})), "cat", 5);
    auto score_of = [](const std::vector<ScoredTitle>& r) {
      for (const auto& st : r) {
        if (st.title == "D") return st.score;
      }
      return 0.0;
    };
    EXPECT_LE(score_of(lo), score_of(hi)) << tf;
    for (const auto& st : hi) EXPECT_GE(st.score, 0.0);
  }
}

TEST(Tfidf, Examples) {
  const auto c = corpus_of({{"A", "cat"}, {"B", "dog"}, {"C", "fish"}});
  const auto idx = InvertedIndex::build(c, IndexKind::kTfidf);
  // Doc "A" holds "a cat": query with the same terms is the same vector.
  auto r = tfidf_search(idx, "a cat", 3);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].title, "A");
  EXPECT_NEAR(r[0].score, 1.0, 1e-12);
  EXPECT_TRUE(tfidf_search(idx, "zebra", 3).empty());
  EXPECT_TRUE(tfidf_search(idx, "", 3).empty());
  // Orthogonal: "dog" only occurs in B, so A scores 0 and is left out.
  r = tfidf_search(idx, "dog", 3);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].title, "B");
}

TEST(Tfidf, MatchesDenseCosine) {
  testing_support::Gen g(4321);
  for (int iter = 0; iter < 200; ++iter) {
    Corpus c;
    const std::size_t n = testing_support::uniform(g, 1, 100);
    for (std::size_t i = 0; i < n; ++i) c.add({"Doc " + std::to_string(i), {{random_text(g, 30), {}}}});
    const auto idx = InvertedIndex::build(c, IndexKind::kTfidf);
    const std::string q = random_text(g, 6);
    const std::size_t k = testing_support::uniform(g, 1, 120);
    const auto got = tfidf_search(idx, q, k);
    expect_matches_oracle(idx, got, oracles::tfidf(c, q), k);
    for (const auto& st : got) {
      EXPECT_GT(st.score, 0.0);
      EXPECT_LE(st.score, 1.0);
    }
  }
}

TEST(Baselines, ToyRankingsNonEmptyAndOrdered) {
  const auto c = load_corpus(DEARDR_TOY_DIR "/pages.jsonl", {.raw = true});
  const auto bm = InvertedIndex::build(c);
  const auto tf = InvertedIndex::build(c, IndexKind::kTfidf);
  for (const char* q : {"Napoleon was born on Corsica.", "Lisbon earthquake", "river through London"}) {
    for (const auto& r : {bm25_search(bm, q, 10), tfidf_search(tf, q, 10)}) {
      ASSERT_FALSE(r.empty());
      for (std::size_t i = 1; i < r.size(); ++i) {
        EXPECT_TRUE(r[i - 1].score > r[i].score || (r[i - 1].score == r[i].score && r[i - 1].title < r[i].title));
      }
    }
  }
}
