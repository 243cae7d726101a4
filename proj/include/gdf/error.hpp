#pragma once

#include <stdexcept>
#include <string>

namespace gdf {

// Process exit codes used by the command-line tool. Stable contract.
enum class ExitCode : int {
  ok = 0,
  check_failed = 1,
  config = 2,
  io = 3,
  not_psd = 4,
  model_mismatch = 5,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::check_failed)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

// Input outside the mathematical domain of an operation (negative diagonal, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what, ExitCode::config) {}
};

// Non-finite values in numeric data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::config) {}
};

// Grid level above the configured cap.
class ResolutionError : public Error {
 public:
  explicit ResolutionError(const std::string& what) : Error(what, ExitCode::config) {}
};

// A matrix or kernel that should be positive semidefinite has a materially
// negative eigenvalue.
class NotPsdError : public Error {
 public:
  NotPsdError(const std::string& what, double min_eigenvalue)
      : Error(what, ExitCode::not_psd), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

// Diagonal splitting had to discard too much negative spectrum; the input is
// probably not generated by an i.i.d. feature sample.
class ModelMismatchError : public Error {
 public:
  ModelMismatchError(const std::string& what, double clipped_fraction)
      : Error(what, ExitCode::model_mismatch), clipped_fraction_(clipped_fraction) {}
  double clipped_fraction() const noexcept { return clipped_fraction_; }

 private:
  double clipped_fraction_;
};

}  // namespace gdf
