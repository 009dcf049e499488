#pragma once

#include <stdexcept>
#include <string>

namespace neurofuse {

/// Input data failed validation (shape mismatch, missing values, bad file).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation could not produce a finite or well-defined result.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace neurofuse
