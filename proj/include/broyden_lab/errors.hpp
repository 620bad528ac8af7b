#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace broyden_lab {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  NonConvergence,
  SingularMatrix,
  ZeroDirection,
  DegenerateUpdate,
  PoleEncountered,
  ThresholdNotMet,
  Infeasible,
  OutOfDomain,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::ZeroDirection: return "ZeroDirection";
    case ErrorKind::DegenerateUpdate: return "DegenerateUpdate";
    case ErrorKind::PoleEncountered: return "PoleEncountered";
    case ErrorKind::ThresholdNotMet: return "ThresholdNotMet";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a bound is evaluated below the iteration count where it is valid.
class ThresholdNotMet : public Error {
 public:
  ThresholdNotMet(long long min_k, const std::string& what)
      : Error(ErrorKind::ThresholdNotMet, what), min_k_(min_k) {}

  long long min_k() const noexcept { return min_k_; }

 private:
  long long min_k_;
};

}  // namespace broyden_lab
