#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcpath {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter or data shapes disagree with the architecture.
class ShapeError : public Error {
 public:
  ShapeError(int layer, const std::string& what)
      : Error("shape mismatch at layer " + std::to_string(layer) + ": " + what),
        layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

// A forward pass or loss produced inf/NaN.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

// SGD left the finite regime (loss > 1e6 or non-finite).
class DivergenceError : public Error {
 public:
  DivergenceError(double last_finite_loss, int epoch)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " (last finite loss " + std::to_string(last_finite_loss) + ")"),
        last_finite_loss_(last_finite_loss),
        epoch_(epoch) {}
  double last_finite_loss() const noexcept { return last_finite_loss_; }
  int epoch() const noexcept { return epoch_; }

 private:
  double last_finite_loss_;
  int epoch_;
};

// A path segment was requested from a state that does not satisfy its
// output-invariance precondition. segment_index is -1 when the failing
// builder was called standalone.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what, long segment_index = -1)
      : Error(segment_index < 0
                  ? what
                  : "segment " + std::to_string(segment_index) + ": " + what),
        detail_(what),
        segment_index_(segment_index) {}
  long segment_index() const noexcept { return segment_index_; }
  const std::string& detail() const noexcept { return detail_; }
  PreconditionError at_segment(long index) const { return PreconditionError(detail_, index); }

 private:
  std::string detail_;
  long segment_index_;
};

// Malformed binary input; offset is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Serialized artifact carries a different format tag than expected.
class FormatError : public Error {
 public:
  FormatError(const std::string& expected, const std::string& found)
      : Error("format tag mismatch: expected '" + expected + "', found '" + found + "'"),
        expected_(expected),
        found_(found) {}
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

 private:
  std::string expected_;
  std::string found_;
};

}  // namespace mcpath
