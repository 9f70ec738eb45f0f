#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace retarget {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (bad pose, bad config, mismatched chain).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A model, checkpoint or file whose shapes do not line up with what the caller expects.
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Base class for every persisted-file failure.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  VersionError(std::uint32_t found, std::uint32_t expected, const std::string& what)
      : FormatError(what + ": unsupported version " + std::to_string(found) + " (expected " +
                    std::to_string(expected) + ")"),
        found_(found),
        expected_(expected) {}

  std::uint32_t found() const noexcept { return found_; }
  std::uint32_t expected() const noexcept { return expected_; }

 private:
  std::uint32_t found_;
  std::uint32_t expected_;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(std::size_t epoch, std::size_t step, const std::string& what)
      : Error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
        epoch_(epoch),
        step_(step) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

}  // namespace retarget
