#pragma once

#include <stdexcept>
#include <string>

namespace awsaug {

// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for bad user input (config files, data paths, CLI flags).
class UserError : public Error {
 public:
  using Error::Error;
};

}  // namespace awsaug
