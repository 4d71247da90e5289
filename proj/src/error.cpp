#include "xregion/error.hpp"

namespace xregion {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::DataQuality: return "data-quality error";
    case ErrorKind::OutOfRange: return "out-of-range error";
    case ErrorKind::InsufficientHistory: return "insufficient-history error";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::Numerical: return "numerical failure";
    case ErrorKind::Version: return "version mismatch";
    case ErrorKind::Vocabulary: return "vocabulary mismatch";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Vocabulary:
    case ErrorKind::Version:
      return 1;
    case ErrorKind::Numerical:
      return 3;
    default:
      return 2;
  }
}

}  // namespace xregion
