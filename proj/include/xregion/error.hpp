#pragma once

#include <stdexcept>
#include <string>

namespace xregion {

enum class ErrorKind {
  Config,        // bad configuration, unknown dialect, degenerate polygon
  Io,            // unreadable/unwritable paths
  DataQuality,   // too many malformed rows, corrupt files
  OutOfRange,    // timestamps before epoch, points outside the grid
  InsufficientHistory,
  Contract,      // shape mismatches, asymmetric adjacency
  Numerical,     // NaN/Inf during training
  Version,       // checkpoint version mismatch
  Vocabulary,    // checkpoint region vocabulary mismatch
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind: 1 usage/config, 2 data, 3 numerical.
int exit_code_for(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace xregion
