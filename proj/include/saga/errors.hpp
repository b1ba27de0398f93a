#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace saga {

// Violated precondition or API contract (dimension mismatch, bad argument,
// stale trace, ...). These indicate caller bugs, not recoverable conditions.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Failure class for malformed binary/text inputs.
enum class ParseFault {
  BadMagic,
  BadVersion,
  Truncated,
  DimensionMismatch,
  Malformed,
};

const char* to_string(ParseFault fault);

// Parse failure carrying the byte (or line) offset where it was detected.
class ParseError : public std::runtime_error {
 public:
  ParseError(ParseFault fault, std::size_t offset, const std::string& message)
      : std::runtime_error(std::string(to_string(fault)) + " at offset " +
                           std::to_string(offset) + ": " + message),
        fault_(fault),
        offset_(offset) {}

  ParseFault fault() const noexcept { return fault_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  ParseFault fault_;
  std::size_t offset_;
};

// Filesystem-level failure (missing file, short write, ...).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace saga
