#pragma once

#include <stdexcept>
#include <string>

namespace blocksurgeon {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes incompatible with the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid argument values, non-finite results, out-of-range parameters.
struct ValueError : Error {
  using Error::Error;
};

// Malformed file content (JSON, blobs, CSV).
struct ParseError : Error {
  using Error::Error;
};

// A required (slot, kind) entry is absent from a profile or surrogate set.
struct MissingEntryError : Error {
  using Error::Error;
};

// A pipeline stage was invoked before its predecessors produced their outputs.
struct MissingArtifactError : Error {
  using Error::Error;
};

// Manifest hash-chain breaks, artifact digest mismatches, config/workspace
// disagreement.
struct CorruptArtifactError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
  using Error::Error;
};

// The candidate proposer found every configuration already evaluated.
struct SearchExhaustedError : Error {
  using Error::Error;
};

// Exhaustive enumeration refused; carries the configuration count.
struct SpaceTooLargeError : Error {
  SpaceTooLargeError(const std::string& msg, long long n)
      : Error(msg), combinations(n) {}
  long long combinations;
};

}  // namespace blocksurgeon
