#pragma once

#include <stdexcept>
#include <string>

namespace dnet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A precondition on a scalar argument or a configuration field failed.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ImageError : public Error {
 public:
  enum class Kind { Unreadable, UnsupportedFormat, EmptyImage, WriteFailed };

  ImageError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Malformed, truncated or version-mismatched model / checkpoint container.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace dnet
