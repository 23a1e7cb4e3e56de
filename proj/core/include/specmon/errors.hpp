#pragma once

#include <stdexcept>
#include <string>

namespace specmon {

// Raised for malformed specs, configs and files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a caller violates an operation precondition (bad band index,
// mismatched lengths, empty windows, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by the episode runner when a controller misbehaves.
class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when training produces non-finite losses or gradients.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace specmon
