#pragma once

#include <stdexcept>
#include <string>

namespace unroll {

/// Domain or configuration failure (bad parameters, shape mismatch, divergence).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot be parsed (malformed files).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace unroll
