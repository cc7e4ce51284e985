#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/segment.hpp"

namespace beatroute::evalx {

using Confusion = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;  // [true][pred]

struct ClassMetrics {
  Confusion confusion{};
  std::array<std::int64_t, kNumClasses> support{};         // true beats, missed ones included
  std::array<std::int64_t, kNumClasses> unmatched_pred{};  // detections with no true beat
  std::array<std::int64_t, kNumClasses> missed_true{};     // true beats with no detection
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  double macro_f1 = 0.0;  // over classes with support
  double micro_f1 = 0.0;
  std::int64_t n = 0;

  bool present(BeatClass c) const { return support[index_of(c)] > 0; }
};

/// One-vs-rest precision/recall/F1 on aligned label sequences. Detected-anchor
/// runs may pass unmatched detections (false positives of their predicted
/// class) and missed beats (false negatives of their true class). A class
/// without predictions or support scores 0. Throws ValidationError when the
/// aligned sequences differ in length or everything is empty.
ClassMetrics compute_metrics(std::span<const BeatClass> pred, std::span<const BeatClass> truth,
                             std::span<const BeatClass> unmatched_pred = {},
                             std::span<const BeatClass> missed_true = {});

struct ConfusionRows {
  std::array<std::array<double, kNumClasses>, kNumClasses> rows{};
  std::array<bool, kNumClasses> empty_row{};
};

ConfusionRows confusion_rows(const ClassMetrics& m);

struct ProfileSegment {
  double confidence = 0.0;
  std::vector<BeatClass> minimal;
  std::vector<BeatClass> rich;
  std::vector<BeatClass> truth;
};

struct ProfileBin {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t segments = 0;
  std::int64_t beats = 0;
  std::optional<double> minimal_f1;
  std::optional<double> rich_f1;
};

/// 20 bin edges over [0, 1], dense above 0.98; the last bin includes 1.
std::vector<double> default_bin_edges();

/// Beat-level Micro-F1 of each branch among segments in each confidence bin.
std::vector<ProfileBin> confidence_profile(std::span<const ProfileSegment> segments,
                                           std::span<const double> edges = {});

/// Lower edge of the first occupied bin where Minimal matches or beats Rich
/// after an occupied bin where Rich was strictly better.
std::optional<double> crossover(std::span<const ProfileBin> profile);

inline constexpr std::int64_t kMinShift = 6;
inline constexpr std::int64_t kMaxShift = 30;

/// Anchor set after a perturbation. source[i] is the original index of the
/// i-th remaining anchor; interfered is the shifted beat's new index.
struct Perturbed {
  std::vector<std::int64_t> anchors;
  std::vector<BeatClass> labels;
  std::vector<std::size_t> source;
  std::optional<std::size_t> interfered;
};

/// Removes beat k; it is no longer a prediction target.
Perturbed stress_mask(const Segment& seg, std::size_t k);

/// Moves beat k by `offset` samples, |offset| in [6, 30] (ValidationError
/// otherwise). nullopt when the shifted anchor leaves the segment or would
/// reorder the anchors.
std::optional<Perturbed> stress_mislocalize(const Segment& seg, std::size_t k, std::int64_t offset);

/// Clean minus stressed F1 per class; positive means degradation. nullopt
/// for classes absent from both populations.
std::array<std::optional<double>, kNumClasses> stress_delta(const ClassMetrics& clean, const ClassMetrics& stressed);

struct StressTable {
  std::array<std::optional<double>, kNumClasses> mask_non_interfered{};
  std::array<std::optional<double>, kNumClasses> mislocalize_interfered{};
  std::array<std::optional<double>, kNumClasses> mislocalize_non_interfered{};
  std::int64_t masked_beats = 0;
  std::int64_t mislocalized_beats = 0;
  std::int64_t skipped = 0;
  std::uint64_t seed = 0;
};

/// Label,Mask Interfered,Mask Non-interfered,Mislocalize Interfered,Mislocalize Non-interfered
std::string stress_csv(const StressTable& t);

nlohmann::json to_json(const ClassMetrics& m);
std::string confusion_csv(const ClassMetrics& m);

}  // namespace beatroute::evalx
