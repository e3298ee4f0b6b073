#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "deardr/decode.hpp"
#include "deardr/external_scorer.hpp"
#include "support.hpp"

using namespace deardr;
using testing_support::TempDir;

namespace {

struct Fixture {
  TempDir tmp;
  Vocabulary vocab = build_vocabulary({"Paris", "Rome", "Paris Hilton", "Roma"});
  TitleTrie trie = build_trie({"Paris", "Rome", "Paris Hilton", "Roma"}, vocab);
  std::string vocab_path;

  Fixture() {
    vocab_path = (tmp / "v.txt").string();
    vocab.save(vocab_path);
  }

  std::string echo(const std::string& extra = "") const {
    return std::string(DEARDR_PYTHON) + " " + DEARDR_ECHO_SCORER + " --vocab " + vocab_path + " " + extra;
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(ExternalScorer, AddressDetection) {
  EXPECT_TRUE(ExternalScorer::is_address("localhost:9000"));
  EXPECT_TRUE(ExternalScorer::is_address("tcp://127.0.0.1:1"));
  EXPECT_FALSE(ExternalScorer::is_address("python3 scorer.py"));
  EXPECT_FALSE(ExternalScorer::is_address("./run.sh --port 9"));
}

TEST(ExternalScorer, UniformOverStdio) {
  Fixture f;
  ExternalScorer s({f.echo("--mode uniform"), f.vocab.hash(), 10000, {}});
  const std::vector<TokenId> allowed{4, 5, 6, 7};
  const auto out = score_step(s, "anything", {}, allowed);
  for (double v : out.logprobs) EXPECT_NEAR(v, std::log(0.25), 1e-9);
  EXPECT_FALSE(s.shareable());
}

TEST(ExternalScorer, EchoRanksQueryTitleFirst) {
  Fixture f;
  ExternalScorer s({f.echo(), f.vocab.hash(), 10000, {}});
  const auto ranked = aggregate(beam_search(s, f.trie, "rome was not built in a day", {.beam = 4, .max_titles = 1}));
  ASSERT_FALSE(ranked.empty());
  EXPECT_EQ(ranked[0].title, "Rome");
}

TEST(ExternalScorer, HashMismatchAborts) {
  Fixture f;
  EXPECT_EQ(code_of([&] { ExternalScorer s({f.echo("--wrong-hash"), f.vocab.hash(), 10000, {}}); }),
            ErrorCode::kVocabMismatch);
}

TEST(ExternalScorer, TimeoutAndProtocolErrors) {
  Fixture f;
  const std::string hello = "printf '{\"vocab_hash\":\"" + f.vocab.hash() + "\"}\\n'; ";
  const std::vector<TokenId> allowed{4, 5};
  {
    ExternalScorer s({hello + "sleep 5", f.vocab.hash(), 200, {}});
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_EQ(code_of([&] { s.score("q", {}, allowed); }), ErrorCode::kScorerTimeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
  }
  {
    ExternalScorer s({hello + "read line; echo 'not json'", f.vocab.hash(), 5000, {}});
    EXPECT_EQ(code_of([&] { s.score("q", {}, allowed); }), ErrorCode::kScorerProtocolError);
  }
  {
    ExternalScorer s({hello + "read line; echo '{\"id\":0,\"logprobs\":{\"4\":0}}'", f.vocab.hash(), 5000, {}});
    EXPECT_EQ(code_of([&] { s.score("q", {}, allowed); }), ErrorCode::kScorerProtocolError);
  }
  {
    ExternalScorer s({hello + "exit 0", f.vocab.hash(), 5000, {}});
    EXPECT_EQ(code_of([&] { s.score("q", {}, allowed); }), ErrorCode::kScorerProtocolError);
  }
  EXPECT_EQ(code_of([&] { ExternalScorer s({"echo hello", f.vocab.hash(), 5000, {}}); }),
            ErrorCode::kScorerProtocolError);
}

TEST(ExternalScorer, PassthroughReachesEnvironment) {
  Fixture f;
  const std::string cmd = "printf '{\"vocab_hash\":\"%s\"}\\n' \"$DEARDR_LEARNING_RATE$DEARDR_SCHEDULER\"";
  // The handshake only matches when both settings arrive as variables.
  EXPECT_NO_THROW(ExternalScorer({cmd, "5e-5constant", 5000, {{"learning-rate", "5e-5"}, {"scheduler", "constant"}}}));
  EXPECT_EQ(code_of([&] { ExternalScorer s({cmd, "5e-5constant", 5000, {}}); }), ErrorCode::kVocabMismatch);
}

TEST(ExternalScorer, OverTcp) {
  Fixture f;
  const int port = 20000 + static_cast<int>(::getpid() % 20000);
  const std::string cmd = f.echo("--port " + std::to_string(port)) + " &";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  std::unique_ptr<ExternalScorer> s;
  for (int attempt = 0; attempt < 100 && !s; ++attempt) {
    try {
      s = std::make_unique<ExternalScorer>(
          ExternalScorerOptions{"tcp://127.0.0.1:" + std::to_string(port), f.vocab.hash(), 10000, {}});
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kIoError) << e.what();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
  ASSERT_TRUE(s) << "scorer did not start listening";
  const auto ranked = aggregate(beam_search(*s, f.trie, "a stay at the paris hilton", {.beam = 4, .max_titles = 1}));
  ASSERT_FALSE(ranked.empty());
  EXPECT_EQ(ranked[0].title, "Paris Hilton");
}
