#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace privleak {

enum class ErrorCode {
  kIo,
  kParse,
  kDuplicateId,
  kBadPattern,
  kEmptyHistogram,
  kEmptyCorpus,
  kTooFewPii,
  kNoPii,
  kBadToken,
  kNumeric,
  kBudget,
  kOneClass,
  kDegenerateRetrainAuc,
  kDegenerateBase,
  kMissingScenario,
  kConfig,
};

/// Stable identifier such as "E_PARSE", used in manifests and CLI output.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Malformed record in a line-oriented input; carries the 1-based line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::kParse,
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace privleak
