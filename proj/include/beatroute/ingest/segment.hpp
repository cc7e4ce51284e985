#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/record.hpp"

namespace beatroute {

inline constexpr double kSegmentSeconds = 10.0;

enum class Origin { BaseGrid, Augmented };

/// A fixed-length window of one record. Anchors are segment-relative and
/// strictly increasing; labels[i] belongs to anchors[i].
struct Segment {
  std::string record_ref;
  std::int64_t start_sample = 0;
  std::int64_t length_samples = 0;
  std::vector<std::int64_t> anchors;
  std::vector<BeatClass> labels;
  Origin origin = Origin::BaseGrid;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// floor(seconds * rate).
std::int64_t segment_length(int sampling_rate_hz, double seconds = kSegmentSeconds);

/// Beats of `all_beats` inside [start, start + length), as segment-relative anchors.
void fill_window(Segment& seg, std::span<const Beat> all_beats);

/// Non-overlapping base grid; the trailing partial window is dropped.
std::vector<Segment> cut_segments(const Record& record, double seconds = kSegmentSeconds);

/// Throws DataError when a segment breaks its anchor/label invariants.
void validate(const Segment& seg);

nlohmann::json to_json(const Segment& seg);
Segment segment_from_json(const nlohmann::json& j);

std::string to_string(Origin o);

}  // namespace beatroute
