#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace photonstat {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input bytes do not match the expected file grammar.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

/// Well-formed input that violates a data invariant. `index` identifies the
/// first offending record when the violation is per-record.
class ValidationError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit ValidationError(const std::string& what, std::size_t index = npos)
      : Error(index == npos ? what
                            : what + " (record " + std::to_string(index) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation requires pulsed data but the stream is continuous-wave.
class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

class MissingChannelError : public Error {
 public:
  using Error::Error;
};

class InvalidWindowError : public Error {
 public:
  using Error::Error;
};

class InsufficientRangeError : public Error {
 public:
  using Error::Error;
};

class InsufficientStatisticsError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Spectrum is flat or has more than one dominant peak.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace photonstat
