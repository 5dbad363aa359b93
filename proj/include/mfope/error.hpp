#pragma once

#include <stdexcept>
#include <string>

namespace mfope {

/// Invalid user-supplied configuration or malformed input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a trustworthy result
/// (ill-conditioning, non-finite loss, failed post-solve check).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The data does not support the requested estimate (e.g. the target
/// policy is never matched, or a regression response is constant).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfope
