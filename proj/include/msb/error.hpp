#pragma once

#include <stdexcept>
#include <string>

namespace msb {

// Malformed or inconsistent input data (files, dimensions, non-finite values).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine could not produce a valid result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msb
