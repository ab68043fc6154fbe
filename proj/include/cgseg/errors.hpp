#pragma once

#include <stdexcept>
#include <string>

namespace cgseg {

/// Bad configuration: unknown keys, unparsable values, invalid settings.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or malformed input data.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

private:
  std::size_t epoch_;
};

}  // namespace cgseg
