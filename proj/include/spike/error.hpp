#pragma once

#include <stdexcept>
#include <string>

namespace spike {

/// Base class for every failure raised by the library. Messages are single
/// line so the CLI can forward them unchanged.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientMinority : public Error {
 public:
  using Error::Error;
};

}  // namespace spike
