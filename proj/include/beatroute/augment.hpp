#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/record.hpp"
#include "beatroute/ingest/segment.hpp"

namespace beatroute::augment {

/// Target abundance of each non-N class relative to the N count.
using TargetRatios = std::map<BeatClass, double>;

TargetRatios default_targets();
std::vector<double> default_ladder();

/// A training beat eligible for re-anchoring.
struct BeatRef {
  std::string record;
  std::size_t beat_index = 0;  // index into beats(record)
  std::int64_t sample = 0;
  BeatClass label = BeatClass::N;
};

struct Assignment {
  std::string record;
  std::size_t beat_index = 0;
  std::int64_t sample = 0;
  BeatClass label = BeatClass::N;
  double fraction = 0.5;
};

struct AugmentPlan {
  TargetRatios target_ratio;
  std::vector<double> offsets;
  std::array<std::int64_t, kNumClasses> class_counts{};
  std::array<std::int64_t, kNumClasses> planned{};  // designated beats per class
  std::vector<Assignment> assignments;
};

/// Ladder entries granted to each beat of class c: every beat gets
/// floor(deficit / n_c), an evenly spread subset gets one more, capped at
/// the ladder length. Classes at or above target get none.
AugmentPlan plan_augmentation(std::span<const BeatRef> training_beats, const TargetRatios& targets,
                              std::span<const double> ladder);

/// Window placing the beat at round(f * length) from its start, clipped to the
/// record. nullopt when the record is shorter than one window.
std::optional<Segment> reanchor(const Record& record, std::span<const Beat> record_beats,
                                std::int64_t beat_sample, double fraction, std::int64_t length);

/// Drops repeated (record, start) pairs, keeping base-grid segments over
/// augmented ones and otherwise the first occurrence. Input order is kept.
std::vector<Segment> dedup(std::vector<Segment> segments);

nlohmann::json to_json(const AugmentPlan& plan);

}  // namespace beatroute::augment
