#include "beatroute/ingest/aami.hpp"

namespace beatroute {

AamiClass map_aami(char symbol) {
  switch (symbol) {
    case 'N': case 'L': case 'R': case 'e': case 'j':
      return AamiClass::N;
    case 'A': case 'a': case 'J': case 'S':
      return AamiClass::S;
    case 'V': case 'E':
      return AamiClass::V;
    case 'F':
      return AamiClass::F;
    case '/': case 'f': case 'Q':
      return AamiClass::Q;
    default:
      return AamiClass::NonBeat;
  }
}

std::optional<BeatClass> to_beat_class(AamiClass c) {
  switch (c) {
    case AamiClass::N: return BeatClass::N;
    case AamiClass::S: return BeatClass::S;
    case AamiClass::V: return BeatClass::V;
    case AamiClass::F: return BeatClass::F;
    default: return std::nullopt;
  }
}

char to_char(AamiClass c) {
  switch (c) {
    case AamiClass::N: return 'N';
    case AamiClass::S: return 'S';
    case AamiClass::V: return 'V';
    case AamiClass::F: return 'F';
    case AamiClass::Q: return 'Q';
    default: return '-';
  }
}

}  // namespace beatroute
