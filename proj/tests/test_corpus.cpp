#include <gtest/gtest.h>

#include "deardr/corpus.hpp"
#include "support.hpp"

using namespace deardr;
using testing_support::TempDir;

TEST(NormalizeTitle, Examples) {
  EXPECT_EQ(normalize_title("Barack_Obama"), "Barack Obama");
  EXPECT_EQ(normalize_title("barack  obama"), "Barack obama");
  EXPECT_EQ(normalize_title("FEVER"), "FEVER");
  EXPECT_EQ(normalize_title("  _paris_ "), "Paris");
  EXPECT_EQ(normalize_title("émile Zola"), "Émile Zola");
  EXPECT_EQ(normalize_title("ölüdeniz"), "Ölüdeniz");
}

TEST(NormalizeTitle, EmptyThrows) {
  for (const char* raw : {"", "   ", "___", "\t_ \n"}) {
    try {
      normalize_title(raw);
      FAIL() << "expected EmptyTitle for '" << raw << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptyTitle);
    }
  }
}

TEST(NormalizeTitle, Idempotent) {
  testing_support::Gen g(7);
  for (int i = 0; i < 500; ++i) {
    std::string raw = testing_support::random_title(g);
    for (char& c : raw) {
      if (c == ' ' && g() % 2) c = '_';
    }
    if (g() % 3 == 0) raw = "  " + raw + "__";
    const auto once = normalize_title(raw);
    EXPECT_EQ(normalize_title(once), once) << raw;
    EXPECT_EQ(once.find("  "), std::string::npos);
    EXPECT_EQ(once.find('_'), std::string::npos);
  }
}

TEST(ExtractLinks, Examples) {
  auto a = extract_links("[[Napoleon]] was exiled.");
  EXPECT_EQ(a.text, "Napoleon was exiled.");
  ASSERT_EQ(a.links.size(), 1u);
  EXPECT_EQ(a.links[0], (Hyperlink{"Napoleon", "Napoleon", 0, 8, false}));

  auto b = extract_links("[[Napoleon I|He]] left.");
  EXPECT_EQ(b.text, "He left.");
  ASSERT_EQ(b.links.size(), 1u);
  EXPECT_EQ(b.links[0], (Hyperlink{"Napoleon I", "He", 0, 2, false}));

  auto c = extract_links("No links here.");
  EXPECT_EQ(c.text, "No links here.");
  EXPECT_TRUE(c.links.empty());
  EXPECT_EQ(c.malformed, 0u);
}

TEST(ExtractLinks, SpansCountScalarValues) {
  auto r = extract_links("Café [[paris|Pâris]] and [[Léon_Blum]].");
  EXPECT_EQ(r.text, "Café Pâris and Léon_Blum.");
  ASSERT_EQ(r.links.size(), 2u);
  EXPECT_EQ(r.links[0], (Hyperlink{"Paris", "Pâris", 5, 10, false}));
  EXPECT_EQ(r.links[1], (Hyperlink{"Léon Blum", "Léon_Blum", 15, 24, false}));
}

TEST(ExtractLinks, SectionsNamespacesAndMalformed) {
  auto sec = extract_links("See [[Battle of Waterloo#Aftermath|the aftermath]].");
  EXPECT_EQ(sec.text, "See the aftermath.");
  ASSERT_EQ(sec.links.size(), 1u);
  EXPECT_EQ(sec.links[0].target, "Battle of Waterloo");

  auto file = extract_links("[[File:X.jpg|thumb|caption]]Text [[Category:Foo]]here.");
  EXPECT_EQ(file.text, "Text here.");
  EXPECT_TRUE(file.links.empty());

  auto open = extract_links("broken [[link here");
  EXPECT_EQ(open.text, "broken [[link here");
  EXPECT_EQ(open.malformed, 1u);

  auto nested = extract_links("a [[b [[C]] d");
  EXPECT_EQ(nested.text, "a [[b C d");
  EXPECT_EQ(nested.malformed, 1u);
  ASSERT_EQ(nested.links.size(), 1u);
  EXPECT_EQ(nested.links[0].target, "C");

  auto empty_pipe = extract_links("[[paris|]] is big");
  EXPECT_EQ(empty_pipe.text, "paris is big");
  EXPECT_EQ(empty_pipe.links[0].target, "Paris");

  auto section_only = extract_links("[[#History|history]] here");
  EXPECT_EQ(section_only.text, "history here");
  EXPECT_TRUE(section_only.links.empty());
}

// Invariants over random markup: spans in range, anchor equals the span text,
// links sorted and non-overlapping, targets normalized.
TEST(ExtractLinks, RandomMarkupInvariants) {
  testing_support::Gen g(11);
  const char* pieces[] = {"[[", "]]", "|", "#", " ", "word", "é", "[[Target]]", "[[a b|c]]", "_", "x"};
  for (int iter = 0; iter < 2000; ++iter) {
    std::string src;
    const std::size_t n = testing_support::uniform(g, 0, 14);
    for (std::size_t i = 0; i < n; ++i) src += pieces[g() % 11];
    const auto r = extract_links(src);
    const std::u32string cps = utf8::decode(r.text);
    std::size_t prev_end = 0;
    for (const auto& l : r.links) {
      ASSERT_LT(l.start, l.end) << src;
      ASSERT_LE(l.end, cps.size()) << src;
      ASSERT_GE(l.start, prev_end) << src;
      prev_end = l.end;
      EXPECT_EQ(utf8::encode(std::u32string_view(cps).substr(l.start, l.end - l.start)), l.anchor) << src;
      EXPECT_EQ(normalize_title(l.target), l.target);
    }
  }
}

namespace {

void write(const std::filesystem::path& p, const std::string& s) { io::write_file(p, s); }

const char* kTwoDocs =
    R"({"title":"A","sentences":[{"text":"A links B.","links":[{"target":"B","anchor":"B","start":8,"end":9}]}]})"
    "\n"
    R"({"title":"B","sentences":[{"text":"Plain.","links":[]},{"text":"Goes to Z.","links":[{"target":"Z","anchor":"Z","start":8,"end":9}]}]})"
    "\n";

}  // namespace

TEST(LoadCorpus, TwoDocuments) {
  TempDir tmp;
  write(tmp / "c.jsonl", kTwoDocs);
  const auto c = load_corpus(tmp / "c.jsonl");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.sentence_count(), 3u);
  EXPECT_EQ(c.stats().dangling_links, 1u);
  EXPECT_FALSE(c.documents()[0].sentences[0].links[0].dangling);
  EXPECT_TRUE(c.documents()[1].sentences[1].links[0].dangling);
  EXPECT_TRUE(c.contains("A"));
  EXPECT_TRUE(c.contains("b"));
  EXPECT_FALSE(c.contains("Z"));
}

TEST(LoadCorpus, StrictAndLenient) {
  TempDir tmp;
  write(tmp / "c.jsonl", std::string(kTwoDocs) + "{not json\n");
  try {
    load_corpus(tmp / "c.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
  const auto c = load_corpus(tmp / "c.jsonl", {.raw = false, .strict = false});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.stats().skipped_lines, 1u);
}

TEST(LoadCorpus, InvalidSpansRejected) {
  TempDir tmp;
  const char* bad[] = {
      R"({"title":"A","sentences":[{"text":"abc","links":[{"target":"B","anchor":"abcd","start":0,"end":4}]}]})",
      R"({"title":"A","sentences":[{"text":"abc","links":[{"target":"B","anchor":"b","start":0,"end":1}]}]})",
      R"({"title":"A","sentences":[{"text":"abc","links":[{"target":"  ","anchor":"a","start":0,"end":1}]}]})",
      R"({"title":"A","sentences":[{"text":"abc","links":[{"target":"B","anchor":"bc","start":1,"end":3},{"target":"C","anchor":"a","start":0,"end":1}]}]})",
  };
  for (const char* line : bad) {
    write(tmp / "c.jsonl", std::string(line) + "\n");
    EXPECT_THROW(load_corpus(tmp / "c.jsonl"), Error) << line;
    EXPECT_EQ(load_corpus(tmp / "c.jsonl", {.raw = false, .strict = false}).stats().skipped_lines, 1u);
  }
}

TEST(LoadCorpus, DuplicateTitlesKeepFirst) {
  TempDir tmp;
  write(tmp / "c.jsonl",
        R"({"title":"Paris","sentences":[{"text":"first"}]})"
        "\n"
        R"({"title":"paris","sentences":[{"text":"second"}]})"
        "\n");
  const auto c = load_corpus(tmp / "c.jsonl");
  EXPECT_EQ(c.size(), 1u);
  EXPECT_EQ(c.stats().duplicate_titles, 1u);
  EXPECT_EQ(c.find("Paris")->sentences[0].text, "first");
}

TEST(LoadCorpus, RawWikitext) {
  TempDir tmp;
  write(tmp / "w.jsonl",
        R"({"title":"napoleon","wikitext":"He was born on [[Corsica]].\n\nHe ruled [[France|the French]]."})"
        "\n"
        R"({"title":"Corsica","wikitext":"An island."})"
        "\n");
  const auto c = load_corpus(tmp / "w.jsonl", {.raw = true});
  ASSERT_EQ(c.size(), 2u);
  const auto* n = c.find("Napoleon");
  ASSERT_NE(n, nullptr);
  ASSERT_EQ(n->sentences.size(), 2u);
  EXPECT_EQ(n->sentences[1].text, "He ruled the French.");
  EXPECT_EQ(c.stats().dangling_links, 1u);
}

TEST(LoadCorpus, MissingFileIsIoError) {
  try {
    load_corpus("/nonexistent/deardr/corpus.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(LoadCorpus, SerializeRoundTrip) {
  TempDir tmp;
  write(tmp / "w.jsonl", io::read_file(DEARDR_TOY_DIR "/pages.jsonl"));
  const auto a = load_corpus(tmp / "w.jsonl", {.raw = true});
  save_corpus(a, tmp / "c.jsonl");
  const auto b = load_corpus(tmp / "c.jsonl");
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_corpus(a), serialize_corpus(b));
  EXPECT_EQ(a.stats().dangling_links, b.stats().dangling_links);
}

TEST(LoadCorpus, RandomRoundTrip) {
  testing_support::Gen g(3);
  TempDir tmp;
  for (int iter = 0; iter < 50; ++iter) {
    Corpus c;
    const auto titles = testing_support::random_titles(g, 20);
    for (const auto& t : titles) {
      Document d{t, {}};
      const std::size_t ns = testing_support::uniform(g, 0, 3);
      for (std::size_t i = 0; i < ns; ++i) {
        std::string wiki = "Text about [[" + titles[g() % titles.size()] + "]] and é [[" +
                           testing_support::random_title(g) + "|x]].";
        auto ex = extract_links(wiki);
        d.sentences.push_back({ex.text, ex.links});
      }
      c.add(std::move(d));
    }
    c.resolve_links();
    save_corpus(c, tmp / "r.jsonl");
    EXPECT_EQ(load_corpus(tmp / "r.jsonl"), c);
  }
}
