#pragma once

#include <stdexcept>

namespace lscene {

// Invalid hyperparameter or structural configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lscene
