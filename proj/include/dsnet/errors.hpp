#pragma once

#include <stdexcept>

namespace dsnet {

/// File missing, unreadable, truncated or malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration key or value, or a checkpoint/config mismatch.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsnet
