#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opflow {

enum class ErrorCode {
  InvalidSpec,
  InvalidIdentifier,
  MissingInput,
  TypeMismatch,
  UnknownKey,
  ValueTooLarge,
  UnresolvedReference,
  UnboundPlaceholder,
  ParseError,
  TypeError,
  SliceLengthMismatch,
  RecursionLimitExceeded,
  UnavailableOutput,
  DuplicateKey,
  MissingOutputFile,
  SourceMissing,
  KeyInvalid,
  KeyMissing,
  NotAFile,
  Unsupported,
  UnknownWorkflow,
  UnknownOutput,
  UnknownJobId,
  SubmissionFailed,
  MachineUnreachable,
  IllegalTransition,
  Io,
};

std::string_view to_string(ErrorCode code);

/// The single exception type thrown by the library. `code()` is stable and
/// meant for programmatic handling; `what()` names the offending entry.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Expression parse failure; carries the byte offset into the source text.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : Error(ErrorCode::ParseError,
              message + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace opflow
