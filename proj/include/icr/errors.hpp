#pragma once

#include <stdexcept>
#include <string>

namespace icr {

// Every recoverable failure in the library is thrown as one of these types.
// The CLI maps them to exit codes; tests assert on the concrete type.

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroNorm : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonUnitNorm : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoForwardCache : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BatchTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCaption : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TokenOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpecInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaVersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyRelevance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyAccumulator : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace icr
