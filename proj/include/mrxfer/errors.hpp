#pragma once

#include <stdexcept>
#include <string>

namespace mrxfer {

// Argument-shape problems are reported with std::invalid_argument. The types
// below cover failures that depend on data content or on file contents.

/// A request that is well-formed but cannot be satisfied (e.g. an
/// acceleration factor that the calibration region makes unreachable).
class ConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or a failed factorization inside a solver.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrc {
  io = 1,
  bad_magic = 2,
  unsupported_version = 3,
  truncated = 4,
  dtype_mismatch = 5,
  bad_manifest = 6,
};

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string &what) : std::runtime_error(what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

} // namespace mrxfer
