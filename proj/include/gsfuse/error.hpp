#pragma once

#include <stdexcept>
#include <string>

namespace gsfuse {

/// Base of every error the library throws. Each subclass maps to one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (bad PLY header, missing property, bad JSON schema).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose values violate a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input is valid but the algorithm cannot make progress on it (e.g. DBSCAN finds no cluster).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or inconsistent dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too few correspondences or inliers to estimate a transform.
class RegistrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace gsfuse
