#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "deardr/corpus.hpp"
#include "deardr/scorer.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("deardr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

using Gen = std::mt19937_64;

inline std::size_t uniform(Gen& g, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(g() % (hi - lo + 1));
}

// Small alphabet so titles share prefixes and words often.
inline std::string random_word(Gen& g, std::size_t max_len = 4) {
  static const char* kSyl[] = {"a", "b", "ab", "ba", "ca", "d", "ed", "o", "ro", "x"};
  std::string w;
  const std::size_t n = uniform(g, 1, max_len);
  for (std::size_t i = 0; i < n; ++i) w += kSyl[g() % 10];
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

inline std::string random_title(Gen& g) {
  std::string t = random_word(g);
  const std::size_t words = uniform(g, 1, 3);
  for (std::size_t i = 1; i < words; ++i) {
    t += (g() % 5 == 0) ? "-" : " ";
    t += random_word(g);
  }
  if (g() % 7 == 0) t += " (" + random_word(g, 2) + ")";
  return t;
}

inline std::vector<std::string> random_titles(Gen& g, std::size_t max_n) {
  std::set<std::string> set;
  const std::size_t target = uniform(g, 1, max_n);
  for (std::size_t tries = 0; set.size() < target && tries < target * 20; ++tries) {
    set.insert(deardr::normalize_title(random_title(g)));
  }
  std::vector<std::string> out(set.begin(), set.end());
  std::shuffle(out.begin(), out.end(), g);
  return out;
}

// Random raw scores, with occasional huge or tied values to stress the beam.
class AdversarialScorer final : public deardr::Scorer {
 public:
  explicit AdversarialScorer(std::uint64_t seed) : gen_(seed) {}

  std::vector<double> score(std::string_view, std::span<const deardr::TokenId>,
                            std::span<const deardr::TokenId> allowed) override {
    std::vector<double> out;
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      switch (gen_() % 6) {
        case 0: out.push_back(500.0); break;
        case 1: out.push_back(-500.0); break;
        case 2: out.push_back(0.0); break;
        default: out.push_back(std::uniform_real_distribution<double>(-20.0, 20.0)(gen_));
      }
    }
    return out;
  }

 private:
  Gen gen_;
};

// Deterministic pseudo-random scores keyed on (prefix, token).
class HashScorer final : public deardr::Scorer {
 public:
  explicit HashScorer(std::uint64_t salt) : salt_(salt) {}

  std::vector<double> score(std::string_view, std::span<const deardr::TokenId> prefix,
                            std::span<const deardr::TokenId> allowed) override {
    std::uint64_t h = salt_;
    for (auto t : prefix) h = (h ^ t) * 0x100000001B3ULL;
    std::vector<double> out;
    for (auto t : allowed) {
      std::uint64_t x = (h ^ (t * 0x9E3779B97F4A7C15ULL)) * 0xBF58476D1CE4E5B9ULL;
      x ^= x >> 31;
      out.push_back(static_cast<double>(x % 10000) / 1000.0);
    }
    return out;
  }

 private:
  std::uint64_t salt_;
};

}  // namespace testing_support
