#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace beatroute {

/// Closed evaluation label set. The order N, S, V, F is global: posterior
/// vectors, weight rows and confusion matrices are all indexed by it.
enum class BeatClass : std::uint8_t { N = 0, S = 1, V = 2, F = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<BeatClass, kNumClasses> kAllClasses = {BeatClass::N, BeatClass::S,
                                                                   BeatClass::V, BeatClass::F};

constexpr std::size_t index_of(BeatClass c) { return static_cast<std::size_t>(c); }

constexpr char to_char(BeatClass c) {
  constexpr std::array<char, kNumClasses> kChars = {'N', 'S', 'V', 'F'};
  return kChars[index_of(c)];
}

constexpr std::optional<BeatClass> class_from_char(char c) {
  switch (c) {
    case 'N': return BeatClass::N;
    case 'S': return BeatClass::S;
    case 'V': return BeatClass::V;
    case 'F': return BeatClass::F;
    default: return std::nullopt;
  }
}

}  // namespace beatroute
