#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prewrite {

/// Every failure the library reports carries one of these codes. The CLI maps
/// them onto exit-code classes (see exit_code_for).
enum class ErrorCode {
  kIoFailure,
  kSchemaViolation,
  kDuplicateId,
  kInvalidRequest,
  kAuthMissing,
  kRateLimited,
  kTimeout,
  kTransient,
  kHttpError,
  kMalformedResponse,
  kNoFixtureMatch,
  kHistoryTooLong,
  kParseNoModLevel,
  kParseNoRewrite,
  kParseBadEnum,
  kParseInconsistent,
  kParseNoScore,
  kParseAmbiguous,
  kEmptyGrouping,
  kNonPartition,
  kIterationCap,
  kNoAnnotations,
  kInsufficientItems,
  kUnknownTask,
  kNotAssigned,
  kRange,
  kUnderAnnotated,
  kStageOrder,
  kConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Transient gateway failures that a retry may cure.
bool is_retryable(ErrorCode code);

/// Per-candidate model failures: the pipeline records these against the
/// candidate and keeps going. Anything else halts the stage.
bool is_candidate_level(ErrorCode code);

/// Distinct nonzero process exit code per error class.
int exit_code_for(ErrorCode code);

}  // namespace prewrite
