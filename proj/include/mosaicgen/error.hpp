#ifndef MOSAICGEN_ERROR_HPP
#define MOSAICGEN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mosaicgen {

// Error hierarchy. The CLI maps every subclass to an exit code:
// validation-style failures exit 2, runtime failures exit 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument, bad shape, or a precondition the caller can fix.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Image dimensions not divisible by the requested grid or pyramid depth.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during sampling.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mosaicgen

#endif  // MOSAICGEN_ERROR_HPP
