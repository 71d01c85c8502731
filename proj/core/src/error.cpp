#include "privleak/error.hpp"

namespace privleak {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kDuplicateId: return "E_DUP_ID";
    case ErrorCode::kBadPattern: return "E_BAD_PATTERN";
    case ErrorCode::kEmptyHistogram: return "E_EMPTY_HIST";
    case ErrorCode::kEmptyCorpus: return "E_EMPTY_CORPUS";
    case ErrorCode::kTooFewPii: return "E_TOO_FEW_PII";
    case ErrorCode::kNoPii: return "E_NO_PII";
    case ErrorCode::kBadToken: return "E_BAD_TOKEN";
    case ErrorCode::kNumeric: return "E_NUMERIC";
    case ErrorCode::kBudget: return "E_BUDGET";
    case ErrorCode::kOneClass: return "E_ONE_CLASS";
    case ErrorCode::kDegenerateRetrainAuc: return "E_DEGENERATE_RETRAIN_AUC";
    case ErrorCode::kDegenerateBase: return "E_DEGENERATE_BASE";
    case ErrorCode::kMissingScenario: return "E_MISSING_SCENARIO";
    case ErrorCode::kConfig: return "E_CONFIG";
  }
  return "E_UNKNOWN";
}

}  // namespace privleak
