#pragma once

#include <stdexcept>
#include <string>

namespace dtvnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or unreadable input file.
struct LoadError : Error {
  using Error::Error;
};

// Malformed binary/JSON container; message names the offending field.
struct FormatError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ProviderError : Error {
  using Error::Error;
};

struct DegenerateVectorError : Error {
  using Error::Error;
};

// A NaN or Inf loss halted optimization.
struct TrainingDivergence : Error {
  using Error::Error;
};

// Checkpoint does not belong to the requested configuration.
struct ConfigMismatch : Error {
  using Error::Error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

}  // namespace dtvnet
