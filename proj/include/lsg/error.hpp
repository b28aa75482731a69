#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace lsg {

// Error codes shared across all layers. The HTTP facade re-encodes these
// verbatim into ErrorBody.code, so names are stable wire contract.
enum class ErrorCode {
  TimeBeforeBase,
  Overflow,
  InsufficientPoints,
  NotPassive,
  UnknownAccount,
  UnknownGame,
  UnknownSensor,
  UnknownKind,
  UnknownMechanic,
  AuthFailed,
  ValidationFailed,
  StaleReading,
  SequenceConflict,
  InvalidTransition,
  AsOfBeforeLastEvent,
  NotOnDemand,
  KeyPayloadMismatch,
  DuplicateMechanic,
  CorruptLog,
  BadJson,
  BadRequest,
  HarnessAbort,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::TimeBeforeBase:      return "TIME_BEFORE_BASE";
    case ErrorCode::Overflow:            return "OVERFLOW";
    case ErrorCode::InsufficientPoints:  return "INSUFFICIENT_POINTS";
    case ErrorCode::NotPassive:          return "NOT_PASSIVE";
    case ErrorCode::UnknownAccount:      return "UNKNOWN_ACCOUNT";
    case ErrorCode::UnknownGame:         return "UNKNOWN_GAME";
    case ErrorCode::UnknownSensor:       return "UNKNOWN_SENSOR";
    case ErrorCode::UnknownKind:         return "UNKNOWN_KIND";
    case ErrorCode::UnknownMechanic:     return "UNKNOWN_MECHANIC";
    case ErrorCode::AuthFailed:          return "AUTH_FAILED";
    case ErrorCode::ValidationFailed:    return "VALIDATION_FAILED";
    case ErrorCode::StaleReading:        return "STALE_READING";
    case ErrorCode::SequenceConflict:    return "SEQUENCE_CONFLICT";
    case ErrorCode::InvalidTransition:   return "INVALID_TRANSITION";
    case ErrorCode::AsOfBeforeLastEvent: return "AS_OF_BEFORE_LAST_EVENT";
    case ErrorCode::NotOnDemand:         return "NOT_ON_DEMAND";
    case ErrorCode::KeyPayloadMismatch:  return "KEY_PAYLOAD_MISMATCH";
    case ErrorCode::DuplicateMechanic:   return "DUPLICATE_MECHANIC";
    case ErrorCode::CorruptLog:          return "CORRUPT_LOG";
    case ErrorCode::BadJson:             return "BAD_JSON";
    case ErrorCode::BadRequest:          return "BAD_REQUEST";
    case ErrorCode::HarnessAbort:        return "HARNESS_ABORT";
    case ErrorCode::IoError:             return "IO_ERROR";
  }
  return "UNKNOWN";
}

inline bool error_code_retryable(ErrorCode c) {
  switch (c) {
    case ErrorCode::SequenceConflict:
    case ErrorCode::IoError:
      return true;
    default:
      return false;
  }
}

struct Error {
  ErrorCode code;
  std::string message;
  // Carries the effective balance on INSUFFICIENT_POINTS and the first bad
  // sequence number on CORRUPT_LOG.
  std::optional<std::int64_t> detail;

  const char* code_name() const { return error_code_name(code); }
  bool retryable() const { return error_code_retryable(code); }
};

inline Error make_error(ErrorCode code, std::string message,
                        std::optional<std::int64_t> detail = std::nullopt) {
  return Error{code, std::move(message), detail};
}

// Minimal expected-like result. Degraded outcomes are values, not exceptions.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error err) : v_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() { return std::get<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  const Error& error() const { return std::get<Error>(v_); }

  T value_or(T fallback) const { return ok() ? value() : std::move(fallback); }

 private:
  std::variant<T, Error> v_;
};

// Result<void> stand-in.
struct Ok {};
using Status = Result<Ok>;

}  // namespace lsg
