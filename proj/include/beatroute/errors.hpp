#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace beatroute {

/// Malformed input bytes or text (header, signal, annotation streams).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
  ParseError(const std::string& what, std::size_t byte_offset);

  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

/// A caller-supplied argument or configuration violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Dataset content is missing or inconsistent (checksum, missing files, artifacts).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace beatroute
