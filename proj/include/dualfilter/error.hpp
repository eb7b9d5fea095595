#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace dualfilter {

enum class ErrorCode {
  DimensionMismatch,
  NegativeEntry,
  RowSumError,
  TokenOutOfRange,
  AlphaOutOfRange,
  LengthMismatch,
  NotBinary,
  TooLarge,
  InvalidArgument,
  ImpossibleObservation,
  ZeroProbabilityPrefix,
  EigenFailure,
  SolveFailure,
};

const char* to_string(ErrorCode code);

// Validation errors are caused by bad inputs; numerical errors by a
// computation that could not produce a meaningful result.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> time_index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  // Set for errors tied to a position in a token sequence.
  std::optional<std::size_t> time_index() const noexcept { return time_index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> time_index_;
};

}  // namespace dualfilter
