#include "prewrite/common/error.hpp"

namespace prewrite {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoFailure: return "IO_FAILURE";
    case ErrorCode::kSchemaViolation: return "SCHEMA_VIOLATION";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kInvalidRequest: return "INVALID_REQUEST";
    case ErrorCode::kAuthMissing: return "AUTH_MISSING";
    case ErrorCode::kRateLimited: return "RATE_LIMITED";
    case ErrorCode::kTimeout: return "TIMEOUT";
    case ErrorCode::kTransient: return "TRANSIENT";
    case ErrorCode::kHttpError: return "HTTP_ERROR";
    case ErrorCode::kMalformedResponse: return "MALFORMED_RESPONSE";
    case ErrorCode::kNoFixtureMatch: return "NO_FIXTURE_MATCH";
    case ErrorCode::kHistoryTooLong: return "HISTORY_TOO_LONG";
    case ErrorCode::kParseNoModLevel: return "PARSE_NO_MODLEVEL";
    case ErrorCode::kParseNoRewrite: return "PARSE_NO_REWRITE";
    case ErrorCode::kParseBadEnum: return "PARSE_BAD_ENUM";
    case ErrorCode::kParseInconsistent: return "PARSE_INCONSISTENT";
    case ErrorCode::kParseNoScore: return "PARSE_NO_SCORE";
    case ErrorCode::kParseAmbiguous: return "PARSE_AMBIGUOUS";
    case ErrorCode::kEmptyGrouping: return "EMPTY_GROUPING";
    case ErrorCode::kNonPartition: return "NON_PARTITION";
    case ErrorCode::kIterationCap: return "ITERATION_CAP";
    case ErrorCode::kNoAnnotations: return "NO_ANNOTATIONS";
    case ErrorCode::kInsufficientItems: return "INSUFFICIENT_ITEMS";
    case ErrorCode::kUnknownTask: return "UNKNOWN_TASK";
    case ErrorCode::kNotAssigned: return "NOT_ASSIGNED";
    case ErrorCode::kRange: return "RANGE";
    case ErrorCode::kUnderAnnotated: return "UNDER_ANNOTATED";
    case ErrorCode::kStageOrder: return "STAGE_ORDER";
    case ErrorCode::kConfig: return "CONFIG";
  }
  return "UNKNOWN";
}

bool is_retryable(ErrorCode code) {
  return code == ErrorCode::kRateLimited || code == ErrorCode::kTimeout ||
         code == ErrorCode::kTransient;
}

bool is_candidate_level(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRateLimited:
    case ErrorCode::kTimeout:
    case ErrorCode::kTransient:
    case ErrorCode::kHttpError:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kHistoryTooLong:
    case ErrorCode::kParseNoModLevel:
    case ErrorCode::kParseNoRewrite:
    case ErrorCode::kParseBadEnum:
    case ErrorCode::kParseInconsistent:
    case ErrorCode::kParseNoScore:
    case ErrorCode::kParseAmbiguous:
      return true;
    default:
      return false;
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidRequest:
      return 2;
    case ErrorCode::kIoFailure:
      return 3;
    case ErrorCode::kStageOrder:
      return 4;
    case ErrorCode::kAuthMissing:
    case ErrorCode::kRateLimited:
    case ErrorCode::kTimeout:
    case ErrorCode::kTransient:
    case ErrorCode::kHttpError:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kNoFixtureMatch:
      return 5;
    case ErrorCode::kHistoryTooLong:
    case ErrorCode::kParseNoModLevel:
    case ErrorCode::kParseNoRewrite:
    case ErrorCode::kParseBadEnum:
    case ErrorCode::kParseInconsistent:
    case ErrorCode::kParseNoScore:
    case ErrorCode::kParseAmbiguous:
      return 6;
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kDuplicateId:
    case ErrorCode::kEmptyGrouping:
    case ErrorCode::kNoAnnotations:
      return 7;
    case ErrorCode::kInsufficientItems:
    case ErrorCode::kUnknownTask:
    case ErrorCode::kNotAssigned:
    case ErrorCode::kRange:
    case ErrorCode::kUnderAnnotated:
      return 8;
    case ErrorCode::kNonPartition:
    case ErrorCode::kIterationCap:
      return 9;
  }
  return 1;
}

}  // namespace prewrite
