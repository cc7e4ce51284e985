#pragma once

#include <optional>

#include "beatroute/beat_class.hpp"

namespace beatroute {

/// AAMI superclass of an annotation symbol. Q (paced, fusion-of-paced,
/// unclassifiable) is mapped but excluded from every Segment.
enum class AamiClass { N, S, V, F, Q, NonBeat };

AamiClass map_aami(char symbol);

/// The evaluation class for a mapped symbol, or nullopt for Q / NonBeat.
std::optional<BeatClass> to_beat_class(AamiClass c);

char to_char(AamiClass c);

}  // namespace beatroute
