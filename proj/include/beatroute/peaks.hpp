#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "beatroute/beat_class.hpp"

namespace beatroute::peaks {

/// Strictly increasing sample indices.
using PeakSet = std::vector<std::int64_t>;

struct DetectorConfig {
  double refractory_s = 0.200;
  double integration_s = 0.150;
  double searchback_factor = 1.66;
  double refine_s = 0.040;
  double learning_s = 2.0;
};

/// Pan-Tompkins QRS detector. The input is resampled to 200 Hz for the
/// filter cascade (5-15 Hz band-pass, five-point derivative, squaring,
/// 150 ms integration, adaptive dual thresholds, refractory, search-back);
/// positions are refined on the native-rate signal.
/// Throws ValidationError for rates below 100 Hz or signals shorter than 1 s.
PeakSet detect_rpeaks(std::span<const double> signal, int sampling_rate_hz,
                      const DetectorConfig& config = {});

struct MatchReport {
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  double f1 = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detected, annotated)
};

inline constexpr double kDefaultToleranceMs = 30.0;

/// Greedy one-to-one matching, closest pairs first; equal distances resolve
/// toward the earlier annotated peak. f1 is 1 when both sets are empty.
MatchReport match_peaks(std::span<const std::int64_t> detected,
                        std::span<const std::int64_t> annotated, int sampling_rate_hz,
                        double tolerance_ms = kDefaultToleranceMs);

/// Label of the matched annotated beat for every detection; nullopt when unmatched.
std::vector<std::optional<BeatClass>> align_labels(std::span<const std::int64_t> detected,
                                                   std::span<const std::int64_t> annotated,
                                                   std::span<const BeatClass> labels,
                                                   int sampling_rate_hz,
                                                   double tolerance_ms = kDefaultToleranceMs);

/// Whitespace-separated sample list, e.g. "77 370 663".
std::string format_peaks(std::span<const std::int64_t> peaks);
PeakSet parse_peaks(std::string_view text);

}  // namespace beatroute::peaks
