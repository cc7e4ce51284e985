#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/split.hpp"
#include "beatroute/model.hpp"

namespace beatroute::routing {

enum class AggregateMode { Mean, Min };

std::string to_string(AggregateMode m);
AggregateMode mode_from_string(const std::string& s);

double beat_confidence(const model::Posterior& p);

struct SegmentConfidence {
  std::vector<double> beat_confidences;
  double aggregate = 0.0;
  AggregateMode mode = AggregateMode::Mean;
};

/// Per-beat max probability, aggregated by mean or min. Throws on an empty segment.
SegmentConfidence segment_confidence(std::span<const model::Posterior> posteriors,
                                     AggregateMode mode = AggregateMode::Mean);

/// One induction-split segment with both branch outputs available.
struct SweepSegment {
  std::string subject;
  std::vector<model::Posterior> minimal;
  std::vector<BeatClass> rich;
  std::vector<BeatClass> truth;
};

struct SweepCandidate {
  double tau = 0.0;
  std::int64_t correct = 0;
  std::int64_t rich_segments = 0;
};

struct SweepResult {
  double tau = 0.0;
  double micro_f1 = 0.0;
  std::int64_t rich_segments = 0;
  std::int64_t total_beats = 0;
  AggregateMode mode = AggregateMode::Mean;
  std::vector<std::string> induced_on;
  std::vector<SweepCandidate> candidates;
};

inline constexpr double kAboveOne = 1.0 + 1e-6;

/// Candidates are 0, every observed segment confidence and 1 + 1e-6. A segment
/// keeps its Minimal labels when C_seg >= tau and takes the Rich labels
/// otherwise. Picks the beat-level Micro-F1 maximiser; ties go to fewer Rich
/// routings, then to the larger tau. Every segment must belong to a d2
/// subject of `split`.
SweepResult sweep_threshold(std::span<const SweepSegment> segments, const SplitManifest& split,
                            AggregateMode mode = AggregateMode::Mean);

enum class Branch { MinimalOnly, RichAcquired };

std::string to_string(Branch b);

inline constexpr int kMinimalToolCalls = 2;  // peak detector + confidence calculator
inline constexpr int kRichToolCalls = 4;     // + feature extractor + morphology slot

struct RoutedPrediction {
  std::string segment_id;
  SegmentConfidence confidence;
  Branch branch = Branch::MinimalOnly;
  std::vector<BeatClass> labels;
  int tool_calls = kMinimalToolCalls;
};

using RichPredictor = std::function<std::vector<BeatClass>()>;

/// Confidence-gated policy. The rich predictor runs only when C_seg < tau.
RoutedPrediction route(const std::string& segment_id, std::span<const model::Posterior> minimal, double tau,
                       const RichPredictor& rich_predictor, AggregateMode mode = AggregateMode::Mean);

struct RoutingReport {
  std::int64_t segments = 0;
  double average_tool_calls = 0.0;
  double rich_fraction = 0.0;
  std::optional<double> minimal_branch_micro_f1;
  std::optional<double> rich_branch_micro_f1;
};

/// `truths` may be empty; otherwise it holds one label vector per prediction.
RoutingReport routing_report(std::span<const RoutedPrediction> routed,
                             std::span<const std::vector<BeatClass>> truths = {});

nlohmann::json threshold_artifact(const std::string& dataset, const SweepResult& sweep);
nlohmann::json to_json(const RoutedPrediction& r);

}  // namespace beatroute::routing
