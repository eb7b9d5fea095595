#include "dualfilter/error.hpp"

namespace dualfilter {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::RowSumError: return "RowSumError";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ImpossibleObservation: return "ImpossibleObservation";
    case ErrorCode::ZeroProbabilityPrefix: return "ZeroProbabilityPrefix";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::SolveFailure: return "SolveFailure";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::ImpossibleObservation:
    case ErrorCode::ZeroProbabilityPrefix:
    case ErrorCode::EigenFailure:
    case ErrorCode::SolveFailure:
      return true;
    default:
      return false;
  }
}

namespace {
std::string decorate(ErrorCode code, const std::string& what,
                     std::optional<std::size_t> t) {
  std::string out = std::string(to_string(code)) + ": " + what;
  if (t) out += " (t=" + std::to_string(*t) + ")";
  return out;
}
}  // namespace

Error::Error(ErrorCode code, const std::string& what,
             std::optional<std::size_t> time_index)
    : std::runtime_error(decorate(code, what, time_index)),
      code_(code),
      time_index_(time_index) {}

}  // namespace dualfilter
