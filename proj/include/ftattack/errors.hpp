#pragma once

#include <stdexcept>
#include <string>

namespace ftattack {

/// Mismatched tensor shapes or inconsistent layer dimensions.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid structural sizes (even kernel dimension, too-small image, ...).
struct SizeError : std::invalid_argument {
  explicit SizeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed serialized data (checkpoints, dataset files, manifests).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values where the contract requires finite ones.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failures (missing file, unwritable path).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ftattack
