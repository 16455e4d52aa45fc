#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evd {

/// Timestamps are integer nanoseconds throughout the library.
using Timestamp = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time window or index outside the valid range of an object.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid scalar parameter (non-positive threshold, empty candidate list, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// SE(3) logarithm requested outside the principal branch.
class BranchError : public Error {
 public:
  using Error::Error;
};

/// Degenerate homography or camera behind the scene plane.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Latent-frame sampling too coarse for event synthesis.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents; the message names the byte offset or line.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite objective or diverged optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace evd
