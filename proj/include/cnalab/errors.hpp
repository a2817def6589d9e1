#pragma once

#include <stdexcept>
#include <string>

namespace cnalab {

// Bad user-supplied configuration (flags, plans, thresholds).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent model / adapter / case data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A decomposition or bookkeeping identity failed to hold.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cnalab
