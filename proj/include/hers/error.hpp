#pragma once

#include <stdexcept>
#include <string>

namespace hers {

// Base for all library errors. Messages are meant to be shown to a user as is.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace hers
