#pragma once

#include <stdexcept>
#include <string>

namespace microseg {

// Base for malformed inputs, schema violations and bad configuration.
// CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Base for numerical failures (divergence, degenerate geometry).
// CLI maps these to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& msg) : DataError(msg) {}
};

class EmptyDatasetError : public DataError {
 public:
  explicit EmptyDatasetError(const std::string& msg) : DataError(msg) {}
};

class InvalidTraitError : public DataError {
 public:
  explicit InvalidTraitError(const std::string& msg) : DataError(msg) {}
};

class ConfigError : public DataError {
 public:
  explicit ConfigError(const std::string& msg) : DataError(msg) {}
};

class EmptyWindowError : public DataError {
 public:
  explicit EmptyWindowError(const std::string& msg) : DataError(msg) {}
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& msg) : DataError(msg) {}
};

class CacheError : public DataError {
 public:
  explicit CacheError(const std::string& msg) : DataError(msg) {}
};

class StageOrderError : public DataError {
 public:
  explicit StageOrderError(const std::string& msg) : DataError(msg) {}
};

class DivergenceError : public NumericError {
 public:
  explicit DivergenceError(const std::string& msg) : NumericError(msg) {}
};

class DegenerateTrajectoryError : public NumericError {
 public:
  explicit DegenerateTrajectoryError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace microseg
