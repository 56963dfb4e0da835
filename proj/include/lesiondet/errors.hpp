#pragma once

#include <stdexcept>
#include <string>

namespace lesiondet {

// Raised when an input file or dataset is structurally valid to parse but
// semantically unusable (missing masks, spacing mismatch, empty mask, ...).
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a file cannot be opened, read, written, or decoded at all.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lesiondet
