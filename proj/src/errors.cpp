#include "beatroute/errors.hpp"

namespace beatroute {

ParseError::ParseError(const std::string& what, std::size_t byte_offset)
    : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
      offset_(byte_offset) {}

}  // namespace beatroute
