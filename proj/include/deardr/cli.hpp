#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deardr/baselines.hpp"
#include "deardr/config.hpp"
#include "deardr/corpus.hpp"
#include "deardr/decode.hpp"
#include "deardr/error.hpp"
#include "deardr/eval.hpp"
#include "deardr/external_scorer.hpp"
#include "deardr/io.hpp"
#include "deardr/retrieve.hpp"
#include "deardr/scorer.hpp"
#include "deardr/supervision.hpp"
#include "deardr/trie.hpp"
#include "deardr/version.hpp"
#include "deardr/vocab.hpp"

namespace deardr::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

// Raised for configuration problems detected after flag parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void log(const std::string& msg) { std::cerr << "deardr: " << msg << '\n'; }

inline void require(const std::string& value, const char* key) {
  if (value.empty()) throw UsageError(std::string("missing required option --") + key);
}

// Refuses to write over any input of the run.
inline void check_not_input(const fs::path& out, const std::vector<fs::path>& inputs) {
  std::error_code ec;
  for (const auto& in : inputs) {
    if (fs::exists(out, ec) && fs::exists(in, ec) && fs::equivalent(out, in, ec)) {
      throw UsageError("output " + out.string() + " would overwrite input " + in.string());
    }
  }
}

/// Writes `content` to `path` plus two sidecars: `<path>.meta.json` with the
/// tool version, config hash and input hashes, and `<path>.run.conf` with the
/// resolved configuration, which replays the run via --config.
inline void write_artifact(const fs::path& path, const std::string& content, const RunConfig& cfg,
                           const std::vector<fs::path>& inputs) {
  check_not_input(path, inputs);
  io::write_file(path, content);
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& p : inputs) in[p.string()] = io::sha256_file(p);
  nlohmann::ordered_json meta = {{"tool", kToolName},
                                 {"version", kToolVersion},
                                 {"command", cfg.command},
                                 {"config_hash", cfg.hash()},
                                 {"inputs", std::move(in)},
                                 {"output_sha256", io::sha256_hex(content)}};
  io::write_file(path.string() + ".meta.json", meta.dump(2) + "\n");
  io::write_file(path.string() + ".run.conf", cfg.serialize());
}

inline std::string to_jsonl(const std::vector<RankedResult>& results) {
  std::string out;
  for (const auto& r : results) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<Query> load_queries(const fs::path& path) {
  std::vector<Query> out;
  for (auto& g : load_gold(path, /*require_answers=*/false).records) out.push_back({g.id, g.query});
  return out;
}

/// Builds a scorer factory from a --scorer spec: uniform, lexical,
/// oracle:<gold.jsonl> or external:<command-or-address>.
inline ScorerFactory make_scorer_factory(const RunConfig& cfg, const Vocabulary& vocab) {
  const std::string& spec = cfg.scorer;
  if (spec == "uniform") return [] { return std::make_unique<UniformScorer>(); };
  if (spec == "lexical") return [&vocab] { return std::make_unique<LexicalScorer>(vocab); };
  if (spec.rfind("oracle:", 0) == 0) {
    auto oracle = std::make_shared<OracleScorer>();
    for (const auto& g : load_gold(spec.substr(7)).records) {
      oracle->add(g.query, OracleScorer::path_for(g.answer_sets.front(), vocab));
    }
    // Read-only after construction, so workers can share it.
    struct Shared final : Scorer {
      std::shared_ptr<OracleScorer> inner;
      std::vector<double> score(std::string_view i, std::span<const TokenId> p,
                                std::span<const TokenId> a) override {
        return inner->score(i, p, a);
      }
    };
    return [oracle] {
      auto s = std::make_unique<Shared>();
      s->inner = oracle;
      return s;
    };
  }
  if (spec.rfind("external:", 0) == 0) {
    ExternalScorerOptions opts{spec.substr(9), vocab.hash(), cfg.timeout_ms, cfg.passthrough};
    if (opts.target.empty()) throw UsageError("external scorer needs a command or address");
    return [opts] { return std::make_unique<ExternalScorer>(opts); };
  }
  throw UsageError("unknown scorer '" + spec + "'");
}

struct DecodingIndex {
  Vocabulary vocab;
  TitleTrie trie;
  std::vector<fs::path> inputs;
};

inline DecodingIndex load_decoding_index(const RunConfig& cfg) {
  DecodingIndex d;
  if (!cfg.trie.empty()) {
    const fs::path vocab_path = cfg.vocab.empty() ? fs::path(cfg.trie + ".vocab") : fs::path(cfg.vocab);
    d.trie = TitleTrie::load(cfg.trie);
    d.vocab = Vocabulary::load(vocab_path);
    d.inputs = {cfg.trie, vocab_path};
    return d;
  }
  require(cfg.corpus, "corpus (or --trie)");
  const auto corpus = load_corpus(cfg.corpus, {cfg.raw, cfg.strict});
  const auto titles = corpus.titles();
  d.vocab = cfg.vocab.empty() ? build_vocabulary(titles) : Vocabulary::load(cfg.vocab);
  d.trie = build_trie(titles, d.vocab);
  d.inputs = {cfg.corpus};
  if (!cfg.vocab.empty()) d.inputs.emplace_back(cfg.vocab);
  return d;
}

inline int cmd_ingest(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  const auto corpus = load_corpus(cfg.input, {cfg.raw, cfg.strict});
  const auto& st = corpus.stats();
  log("ingested " + std::to_string(corpus.size()) + " documents, " + std::to_string(corpus.sentence_count()) +
      " sentences (skipped " + std::to_string(st.skipped_lines) + ", duplicates " +
      std::to_string(st.duplicate_titles) + ", malformed markup " + std::to_string(st.malformed_markup) +
      ", dangling links " + std::to_string(st.dangling_links) + ")");
  write_artifact(cfg.output, serialize_corpus(corpus), cfg, {cfg.input});
  return kExitOk;
}

inline int cmd_sample(const RunConfig& cfg) {
  require(cfg.corpus, "corpus");
  require(cfg.output, "output");
  const auto corpus = load_corpus(cfg.corpus, {cfg.raw, cfg.strict});
  GenerateOptions opts{parse_mode(cfg.mode), cfg.seed, cfg.max_per_doc};
  std::string out;
  std::size_t n = 0;
  generate_instances(corpus, opts, [&](const TrainingInstance& t) {
    out += to_json(t).dump();
    out.push_back('\n');
    ++n;
  });
  log(std::to_string(n) + " " + std::string(to_string(opts.mode)) + " instances");
  write_artifact(cfg.output, out, cfg, {cfg.corpus});
  return kExitOk;
}

inline int cmd_subsample(const RunConfig& cfg) {
  require(cfg.input, "input");
  require(cfg.output, "output");
  std::vector<std::string> lines;
  io::for_each_line(cfg.input, [&](std::string_view l, std::size_t) {
    if (!l.empty()) lines.emplace_back(l);
  });
  const std::size_t total = lines.size();
  auto picked = subsample_lines(std::move(lines), cfg.n, cfg.seed);
  std::string out;
  for (const auto& l : picked) {
    out += l;
    out.push_back('\n');
  }
  log("sampled " + std::to_string(picked.size()) + " of " + std::to_string(total) + " lines");
  write_artifact(cfg.output, out, cfg, {cfg.input});
  return kExitOk;
}

inline int cmd_build_index(const RunConfig& cfg) {
  require(cfg.corpus, "corpus");
  require(cfg.output, "output");
  const auto corpus = load_corpus(cfg.corpus, {cfg.raw, cfg.strict});
  if (cfg.type == "trie") {
    const auto titles = corpus.titles();
    std::vector<fs::path> inputs{cfg.corpus};
    Vocabulary vocab;
    std::string vocab_out;
    if (!cfg.vocab.empty()) {
      vocab = Vocabulary::load(cfg.vocab);
      inputs.emplace_back(cfg.vocab);
    } else {
      vocab = build_vocabulary(titles);
      vocab_out = cfg.output + ".vocab";
    }
    const auto trie = build_trie(titles, vocab);
    log("trie over " + std::to_string(titles.size()) + " titles, " + std::to_string(trie.node_count()) +
        " nodes, vocabulary " + std::to_string(vocab.size()));
    if (!vocab_out.empty()) write_artifact(vocab_out, vocab.serialize(), cfg, {cfg.corpus});
    write_artifact(cfg.output, trie.serialize(), cfg, inputs);
    return kExitOk;
  }
  IndexKind kind;
  if (cfg.type == "bm25") {
    kind = IndexKind::kBm25;
  } else if (cfg.type == "tfidf") {
    kind = IndexKind::kTfidf;
  } else {
    throw UsageError("--type must be bm25, tfidf or trie");
  }
  const auto index = InvertedIndex::build(corpus, kind);
  log("indexed " + std::to_string(index.doc_count()) + " documents, " + std::to_string(index.postings().size()) +
      " terms");
  write_artifact(cfg.output, index.serialize(), cfg, {cfg.corpus});
  return kExitOk;
}

inline int cmd_retrieve(const RunConfig& cfg) {
  require(cfg.queries, "queries");
  require(cfg.output, "output");
  const auto idx = load_decoding_index(cfg);
  const auto queries = load_queries(cfg.queries);
  RetrieveOptions opts;
  opts.beam = {cfg.beam, cfg.max_titles, cfg.max_len, cfg.length_norm};
  opts.unconstrained = cfg.unconstrained;
  opts.workers = cfg.workers;
  RetrieveStats stats;
  const auto results = retrieve_all(make_scorer_factory(cfg, idx.vocab), idx.trie, idx.vocab, queries, opts, &stats);
  log("decoded " + std::to_string(results.size()) + " queries" +
      (cfg.unconstrained ? ", discarded " + std::to_string(stats.invalid_titles) + " non-title outputs" : ""));
  auto inputs = idx.inputs;
  inputs.emplace_back(cfg.queries);
  write_artifact(cfg.output, to_jsonl(results), cfg, inputs);
  return kExitOk;
}

inline int cmd_baseline(const RunConfig& cfg) {
  require(cfg.queries, "queries");
  require(cfg.output, "output");
  std::vector<fs::path> inputs;
  InvertedIndex index;
  if (!cfg.index.empty()) {
    index = InvertedIndex::load(cfg.index);
    inputs.emplace_back(cfg.index);
  } else {
    require(cfg.corpus, "corpus (or --index)");
    index = InvertedIndex::build(load_corpus(cfg.corpus, {cfg.raw, cfg.strict}));
    inputs.emplace_back(cfg.corpus);
  }
  bool use_tfidf = index.kind() == IndexKind::kTfidf;
  if (cfg.type == "bm25") use_tfidf = false;
  if (cfg.type == "tfidf") use_tfidf = true;
  const auto queries = load_queries(cfg.queries);
  inputs.emplace_back(cfg.queries);
  std::vector<RankedResult> results(queries.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      results[i].id = queries[i].id;
      results[i].ranked = use_tfidf ? tfidf_search(index, queries[i].text, cfg.top_k)
                                    : bm25_search(index, queries[i].text, cfg.top_k, {cfg.k1, cfg.b});
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, queries.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  log(std::string(use_tfidf ? "tfidf (ltc cosine)" : "bm25") + " over " + std::to_string(queries.size()) +
      " queries");
  write_artifact(cfg.output, to_jsonl(results), cfg, inputs);
  return kExitOk;
}

inline MetricsReport run_evaluate(const RunConfig& cfg) {
  require(cfg.results, "results");
  require(cfg.gold, "gold");
  return evaluate(cfg.results, cfg.gold, {cfg.ks, cfg.allow_missing});
}

inline MetricsReport evaluate_to_file(const RunConfig& cfg) {
  const auto rep = run_evaluate(cfg);
  if (!cfg.output.empty()) write_artifact(cfg.output, to_json(rep).dump(2) + "\n", cfg, {cfg.results, cfg.gold});
  return rep;
}

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.format != "json" && cfg.format != "table") throw UsageError("--format must be json or table");
  const auto rep = evaluate_to_file(cfg);
  out << (cfg.format == "json" ? to_json(rep).dump(2) + "\n" : to_table(rep));
  return kExitOk;
}

/// ingest -> sample -> build-index -> retrieve -> evaluate, plus optional
/// sparse baselines, all under out-dir.
inline int cmd_pipeline(const RunConfig& cfg, std::ostream& out) {
  require(cfg.input, "input");
  require(cfg.gold, "gold");
  require(cfg.out_dir, "out-dir");
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  io::write_file(dir / "run.conf", cfg.serialize());
  auto step = [&](const char* name) {
    RunConfig c = cfg;
    c.command = name;
    c.input.clear();
    c.output.clear();
    c.corpus = (dir / "corpus.jsonl").string();
    c.raw = false;
    return c;
  };

  RunConfig ingest = cfg;
  ingest.command = "ingest";
  ingest.output = (dir / "corpus.jsonl").string();
  cmd_ingest(ingest);

  RunConfig sample = step("sample");
  sample.output = (dir / ("instances." + std::string(to_string(parse_mode(cfg.mode))) + ".jsonl")).string();
  cmd_sample(sample);

  RunConfig build = step("build-index");
  build.type = "trie";
  build.output = (dir / "titles.trie").string();
  cmd_build_index(build);

  RunConfig retrieve = step("retrieve");
  retrieve.trie = build.output;
  retrieve.vocab = cfg.vocab.empty() ? build.output + ".vocab" : cfg.vocab;
  retrieve.queries = cfg.gold;
  retrieve.output = (dir / "results.jsonl").string();
  cmd_retrieve(retrieve);

  RunConfig eval = step("evaluate");
  eval.results = retrieve.output;
  eval.output = (dir / "metrics.json").string();
  out << "autoregressive (" << cfg.scorer << ")\n" << to_table(evaluate_to_file(eval));

  for (const auto& kind : cfg.baselines) {
    if (kind != "bm25" && kind != "tfidf") throw UsageError("unknown baseline '" + kind + "'");
    RunConfig bi = step("build-index");
    bi.type = kind;
    bi.output = (dir / (kind + ".idx")).string();
    cmd_build_index(bi);
    RunConfig bl = step("baseline");
    bl.index = bi.output;
    bl.type = kind;
    bl.queries = cfg.gold;
    bl.output = (dir / ("results." + kind + ".jsonl")).string();
    cmd_baseline(bl);
    RunConfig be = step("evaluate");
    be.results = bl.output;
    be.output = (dir / ("metrics." + kind + ".json")).string();
    out << kind << "\n" << to_table(evaluate_to_file(be));
  }
  return kExitOk;
}

// Pipeline configs name their files relative to the config's own directory.
inline void resolve_relative_paths(KeyValues& kv, const fs::path& base) {
  if (base.empty()) return;
  auto fix = [&](std::string& v) {
    if (!v.empty() && fs::path(v).is_relative()) v = (base / v).lexically_normal().string();
  };
  for (const char* key : {"input", "gold", "vocab", "out-dir", "corpus", "queries"}) {
    if (auto it = kv.find(key); it != kv.end()) fix(it->second);
  }
  if (auto it = kv.find("scorer"); it != kv.end() && it->second.rfind("oracle:", 0) == 0) {
    std::string path = it->second.substr(7);
    fix(path);
    it->second = "oracle:" + path;
  }
}

namespace detail {

// Collects long options as strings so config-file values can be overlaid by
// only those flags the user actually passed.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  FlagSet& opt(const std::string& name, const std::string& help) {
    auto& slot = values_[name];
    options_[name] = app_->add_option("--" + name, slot, help);
    return *this;
  }

  // Boolean switch; also accepts --name=true|false.
  FlagSet& flag(const std::string& name, const std::string& help) {
    auto& slot = values_[name];
    options_[name] = app_->add_option("--" + name, slot, help)->expected(0, 1);
    return *this;
  }

  void overlay(KeyValues& kv) const {
    for (const auto& [name, option] : options_) {
      if (option->count() == 0) continue;
      const auto& v = values_.at(name);
      if (name == "no-length-norm") {
        kv["length-norm"] = (v.empty() || v == "true") ? "false" : "true";
      } else {
        kv[name] = v.empty() ? "true" : v;
      }
    }
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

}  // namespace detail

/// Entry point shared by the deardr binary and the tests. Returns 0 on
/// success, 1 for data errors and 2 for usage errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout) {
  CLI::App app{"Distantly supervised autoregressive document retrieval toolkit", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Sub {
    CLI::App* app;
    std::unique_ptr<detail::FlagSet> flags;
    std::string config;
  };
  std::map<std::string, Sub> subs;
  auto add = [&](const std::string& name, const std::string& help) -> detail::FlagSet& {
    Sub s{app.add_subcommand(name, help), nullptr, {}};
    s.flags = std::make_unique<detail::FlagSet>(s.app);
    auto& ref = subs[name] = std::move(s);
    if (name == "pipeline") {
      ref.app->add_option("config", ref.config, "flat key = value config file")->required();
    } else {
      ref.app->add_option("--config", ref.config, "flat key = value config file; flags override it");
    }
    return *ref.flags;
  };
  auto pass = [](detail::FlagSet& f) {
    f.opt("learning-rate", "passed to external scorers").opt("scheduler", "passed to external scorers")
        .opt("dropout", "passed to external scorers");
  };

  add("ingest", "parse a corpus and write normalized corpus JSONL")
      .opt("input", "corpus JSONL or raw wikitext JSONL").opt("output", "corpus JSONL to write")
      .flag("raw", "input lines are {title, wikitext}").flag("strict", "fail on the first bad line (default true)");
  add("sample", "generate PT/HL/PTHL distant-supervision instances")
      .opt("corpus", "corpus JSONL").opt("output", "instance JSONL to write").opt("mode", "pt, hl or pthl")
      .opt("seed", "random seed").opt("max-per-doc", "cap on instances per document")
      .flag("raw", "corpus is raw wikitext JSONL").flag("strict", "fail on bad lines");
  add("subsample", "uniformly sample lines of an instance file")
      .opt("input", "JSONL to sample from").opt("output", "JSONL to write").opt("n", "number of lines")
      .opt("seed", "random seed");
  add("build-index", "build a title trie or a sparse inverted index")
      .opt("type", "trie, bm25 or tfidf").opt("corpus", "corpus JSONL").opt("output", "index file to write")
      .opt("vocab", "existing vocabulary file (trie only)").flag("raw", "corpus is raw wikitext JSONL")
      .flag("strict", "fail on bad lines");
  auto& retrieve = add("retrieve", "trie-constrained beam-search retrieval");
  retrieve.opt("queries", "query JSONL ({id, query})").opt("output", "results JSONL to write")
      .opt("trie", "title trie from build-index").opt("vocab", "vocabulary (default <trie>.vocab)")
      .opt("corpus", "build the trie from this corpus instead").opt("scorer", "uniform|lexical|oracle:<gold>|external:<cmd-or-addr>")
      .opt("beam", "beam size (default 10)").opt("max-titles", "titles per hypothesis (default 5)")
      .opt("max-len", "max decoded tokens (default 64)").flag("no-length-norm", "rank beams by raw log-probability")
      .flag("unconstrained", "decode without the trie and drop non-title outputs")
      .opt("workers", "query-parallel workers").opt("timeout-ms", "external scorer reply timeout")
      .flag("raw", "corpus is raw wikitext JSONL").flag("strict", "fail on bad lines");
  pass(retrieve);
  add("baseline", "BM25 / TF-IDF retrieval")
      .opt("queries", "query JSONL").opt("output", "results JSONL to write").opt("index", "index from build-index")
      .opt("corpus", "index this corpus on the fly").opt("type", "bm25 or tfidf (default: the index's type)")
      .opt("top-k", "results per query (default 10)").opt("k1", "BM25 k1").opt("b", "BM25 b")
      .opt("workers", "query-parallel workers").flag("raw", "corpus is raw wikitext JSONL")
      .flag("strict", "fail on bad lines");
  add("evaluate", "R-Precision and Recall@k against gold answer sets")
      .opt("results", "results JSONL").opt("gold", "gold JSONL").opt("k", "comma-separated k list (default 1,5,10)")
      .opt("format", "json or table").opt("output", "also write the JSON report here")
      .opt("allow-missing", "tolerated share of gold queries without results (default 1.0)");
  auto& pipeline = add("pipeline", "ingest -> sample -> build-index -> retrieve -> evaluate from one config");
  pipeline.opt("out-dir", "output directory").opt("scorer", "scorer spec").opt("seed", "random seed")
      .opt("mode", "pt, hl or pthl").opt("beam", "beam size").opt("max-titles", "titles per hypothesis")
      .opt("workers", "query-parallel workers").opt("k", "comma-separated k list")
      .flag("unconstrained", "decode without the trie and drop non-title outputs")
      .flag("no-length-norm", "rank beams by raw log-probability");
  pass(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, std::cerr);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, std::cerr);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto chosen = app.get_subcommands();
    std::cerr << (chosen.empty() ? app.help() : chosen.front()->help());
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  auto& sub = subs.at(name);
  try {
    KeyValues kv;
    if (!sub.config.empty()) kv = load_key_values(sub.config);
    if (name == "pipeline") resolve_relative_paths(kv, fs::path(sub.config).parent_path());
    kv.erase("command");
    sub.flags->overlay(kv);
    RunConfig cfg;
    try {
      cfg = RunConfig::from_key_values(kv);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    cfg.command = name;
    if (name == "ingest") return cmd_ingest(cfg);
    if (name == "sample") return cmd_sample(cfg);
    if (name == "subsample") return cmd_subsample(cfg);
    if (name == "build-index") return cmd_build_index(cfg);
    if (name == "retrieve") return cmd_retrieve(cfg);
    if (name == "baseline") return cmd_baseline(cfg);
    if (name == "evaluate") return cmd_evaluate(cfg, out);
    if (name == "pipeline") return cmd_pipeline(cfg, out);
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << sub.app->help();
    return kExitUsage;
  } catch (const Error& e) {
    nlohmann::json err = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", "InternalError"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return kExitData;
  }
}

}  // namespace deardr::cli
