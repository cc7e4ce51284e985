#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/segment.hpp"

namespace beatroute::features {

inline constexpr std::size_t kDim = 23;
inline constexpr std::size_t kWindow = 180;
inline constexpr std::size_t kROffset = 90;
inline constexpr int kReferenceRate = 360;
inline constexpr std::size_t kLocalBeats = 10;

using FeatureVector = std::array<double, kDim>;

/// (pre, next, local, global) in samples.
struct RrQuad {
  double pre = 0.0;
  double next = 0.0;
  double local = 0.0;
  double global = 0.0;

  friend bool operator==(const RrQuad&, const RrQuad&) = default;
};

/// Timing of beat k from the segment anchors alone:
///   pre    a_k - a_{k-1}; the first beat uses its distance from the segment start
///   next   a_{k+1} - a_k; the last beat repeats its pre value
///   local  mean pre over the trailing (up to) ten beats ending at k
///   global mean pre over beats before k; the first beat uses its local value
/// Local and global are exact means here; see rounded().
RrQuad rr_quadruple(std::span<const std::int64_t> anchors, std::size_t k);

/// Integer-sample version of the timing group, as it appears in the vector.
RrQuad rounded(const RrQuad& rr);

/// Per-component normalisation divisor.
struct RrDivisor {
  std::array<double, 4> by_component{1.0, 1.0, 1.0, 1.0};
};

RrQuad normalize_rr(const RrQuad& rr, double divisor);
RrQuad normalize_rr(const RrQuad& rr, const RrDivisor& divisor);

enum class DivisorMode { RecordMean, SegmentMean };

/// Mean of each exact RR component over every beat of the given segments.
RrDivisor record_divisor(std::span<const Segment> base_segments);

/// Mean pre-RR of one segment, used for all four components.
RrDivisor segment_divisor(std::span<const std::int64_t> anchors);

struct BeatWindow {
  std::array<double, kWindow> samples{};
  bool padded_left = false;
  bool padded_right = false;
};

/// 180 samples spanning [R - 0.25 s, R + 0.25 s), R at index 90, linearly
/// resampled when the rate differs from 360 Hz. Outside the segment the
/// window is zero-padded.
BeatWindow beat_window(std::span<const double> segment_signal, std::int64_t anchor,
                       int sampling_rate_hz);

double r_amplitude(std::span<const double> segment_signal, std::int64_t anchor);

/// Population skewness and non-excess kurtosis; (0, 0) for a constant block.
std::pair<double, double> moments(std::span<const double> block);

/// Skewness and (non-excess) kurtosis of five contiguous 36-sample blocks:
/// (skew_1..skew_5, kurt_1..kurt_5). A constant block gives 0, 0.
std::array<double, 10> hos_features(const BeatWindow& window);

/// Distances from the R point to the extrema of beat[0,40), beat[75,85),
/// beat[95,105) and beat[150,180) (max, min, min, max; leftmost on ties),
/// after min-max scaling both axes over the five points.
std::array<double, 4> my_morph(const BeatWindow& window);

struct BeatFeatures {
  RrQuad rr;
  RrQuad norm_rr;
  double amp = 0.0;
  std::array<double, 10> hos{};
  std::array<double, 4> my_morph{};

  friend bool operator==(const BeatFeatures&, const BeatFeatures&) = default;
};

/// rr | norm_rr | amp | hos | my_morph.
FeatureVector assemble(const BeatFeatures& f);
BeatFeatures split(const FeatureVector& v);

/// Indices of the timing-only tier (rr + norm_rr) and of the full vector.
std::vector<std::size_t> minimal_mask();
std::vector<std::size_t> rich_mask();

std::array<std::string, kDim> column_names();

/// Every beat of a segment. The RR group is rounded; norm_rr uses exact values.
std::vector<BeatFeatures> extract_segment(std::span<const double> segment_signal,
                                          std::span<const std::int64_t> anchors,
                                          int sampling_rate_hz, const RrDivisor& divisor);

/// Transcript line: [77:RR=77,293,77,77;norm_RR=...;amp=1.1600;HOS=[...];myMorph=[...]]
std::string format_transcript(std::int64_t anchor, const BeatFeatures& f);

/// One CSV row of the feature table.
struct FeatureRow {
  std::string subject;
  std::int64_t segment = 0;
  std::int64_t anchor = 0;
  std::optional<BeatClass> label;
  FeatureVector values{};
};

std::string csv_header();
std::string to_csv(const FeatureRow& row);
FeatureRow parse_csv_row(std::string_view line);

}  // namespace beatroute::features
