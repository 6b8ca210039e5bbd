#pragma once

#include <stdexcept>
#include <string>

namespace epe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied value outside an operation's domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed PPM/PGM payload.
class ImageFormatError : public Error {
 public:
  enum class Kind { bad_magic, truncated, bad_maxval, bad_header };

  ImageFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { magic_mismatch, truncated, shape_mismatch, missing_tensor };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training aborted (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace epe
