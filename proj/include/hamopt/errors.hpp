#pragma once

#include <stdexcept>
#include <string>

namespace hamopt {

// Error taxonomy; the CLI maps these onto exit codes (config 2,
// numerical 3, budget 4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct BudgetError : Error {
  using Error::Error;
};

}  // namespace hamopt
