#include "saga/errors.hpp"

namespace saga {

const char* to_string(ParseFault fault) {
  switch (fault) {
    case ParseFault::BadMagic: return "bad magic";
    case ParseFault::BadVersion: return "unsupported version";
    case ParseFault::Truncated: return "truncated input";
    case ParseFault::DimensionMismatch: return "dimension mismatch";
    case ParseFault::Malformed: return "malformed input";
  }
  return "unknown fault";
}

}  // namespace saga
