#pragma once

#include <stdexcept>
#include <string>

namespace dstream {

/// Caller broke a documented precondition (wrong rank, wrong state, bad size).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Ranks disagreed on the wire protocol (sequence gap, tag mismatch, lost face).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// A parameter set failed validation before any work started.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem write failed mid-run; carries how far we got.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::uint64_t bytes_written)
      : std::runtime_error(what + " (bytes written: " + std::to_string(bytes_written) + ")"),
        bytes_written_(bytes_written) {}
  std::uint64_t bytes_written() const noexcept { return bytes_written_; }

 private:
  std::uint64_t bytes_written_;
};

}  // namespace dstream
