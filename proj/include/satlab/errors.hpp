#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names both operands' shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument outside its domain (for example alpha <= 0).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Configuration schema violation. `path()` is the JSON path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class DataErrorKind { Io, BadMagic, BadVersion, Truncated, CountMismatch, Format };

const char* to_string(DataErrorKind kind) noexcept;

class DataError : public Error {
 public:
  DataError(DataErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace sat
