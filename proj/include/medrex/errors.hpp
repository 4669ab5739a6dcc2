#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medrex {

// Malformed annotation line. Carries the byte offset of the failure point
// within the line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& reason, std::size_t byte_offset)
      : std::runtime_error(reason + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Inconsistent corpus content: dangling annotations, span/text mismatches,
// misaligned sidecar files. Message names the offending file and line.
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad model file: wrong magic, unsupported version, truncation.
class ModelFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad rule artifact: pattern without both slots, unknown label in a
// lexicon file, malformed parse sidecar.
class PatternError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss) or was handed unusable input.
class TrainingError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace medrex
