#pragma once

#include <stdexcept>
#include <string>

namespace dgrl {

// Bad configuration values or file contents (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: wrong shapes, calls out of order, invalid ids.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values during optimisation (CLI exit code 3).
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dgrl
