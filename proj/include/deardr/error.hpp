#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deardr {

enum class ErrorCode {
  kEmptyTitle,
  kMalformedMarkup,
  kParseError,
  kIoError,
  kUnkInTitle,
  kInvalidPrefix,
  kEmptyTrie,
  kScorerTimeout,
  kScorerProtocolError,
  kVocabMismatch,
  kEmptyCorpus,
  kEmptyGold,
  kDuplicateTitle,
  kIdMismatch,
  kBadFormat,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyTitle: return "EmptyTitle";
    case ErrorCode::kMalformedMarkup: return "MalformedMarkup";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kUnkInTitle: return "UnkInTitle";
    case ErrorCode::kInvalidPrefix: return "InvalidPrefix";
    case ErrorCode::kEmptyTrie: return "EmptyTrie";
    case ErrorCode::kScorerTimeout: return "ScorerTimeout";
    case ErrorCode::kScorerProtocolError: return "ScorerProtocolError";
    case ErrorCode::kVocabMismatch: return "VocabMismatch";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyGold: return "EmptyGold";
    case ErrorCode::kDuplicateTitle: return "DuplicateTitle";
    case ErrorCode::kIdMismatch: return "IdMismatch";
    case ErrorCode::kBadFormat: return "BadFormat";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries one of the codes above so the
// CLI can map it to a structured message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deardr
