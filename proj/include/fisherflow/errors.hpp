#pragma once

#include <stdexcept>
#include <string>

namespace fisherflow {

/// A precondition on user-supplied input was violated (bad config, bad shapes).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation could not be carried out (stiffness, truncation, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fisherflow
