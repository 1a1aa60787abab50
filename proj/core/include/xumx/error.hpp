#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xumx {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or signal dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported RIFF/WAVE data. `offset()` is the byte position
/// at which parsing failed.
class WavError : public Error {
 public:
  WavError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Training stopped because the loss became non-finite or diverged.
class TrainingAbort : public Error {
 public:
  TrainingAbort(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace xumx
