#include "beatroute/routing.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "beatroute/errors.hpp"

namespace beatroute::routing {

std::string to_string(AggregateMode m) { return m == AggregateMode::Mean ? "mean" : "min"; }

AggregateMode mode_from_string(const std::string& s) {
  if (s == "mean") return AggregateMode::Mean;
  if (s == "min") return AggregateMode::Min;
  throw ValidationError("unknown aggregation mode '" + s + "' (expected mean or min)");
}

std::string to_string(Branch b) { return b == Branch::MinimalOnly ? "minimal" : "rich"; }

double beat_confidence(const model::Posterior& p) { return p.confidence(); }

SegmentConfidence segment_confidence(std::span<const model::Posterior> posteriors, AggregateMode mode) {
  if (posteriors.empty()) throw ValidationError("segment_confidence: segment has no beats");
  SegmentConfidence sc;
  sc.mode = mode;
  for (const auto& p : posteriors) sc.beat_confidences.push_back(beat_confidence(p));
  if (mode == AggregateMode::Mean) {
    sc.aggregate = std::accumulate(sc.beat_confidences.begin(), sc.beat_confidences.end(), 0.0) /
                   static_cast<double>(sc.beat_confidences.size());
  } else {
    sc.aggregate = *std::min_element(sc.beat_confidences.begin(), sc.beat_confidences.end());
  }
  return sc;
}

SweepResult sweep_threshold(std::span<const SweepSegment> segments, const SplitManifest& split,
                            AggregateMode mode) {
  if (segments.empty()) throw ValidationError("sweep_threshold: induction split is empty");

  struct Entry {
    double conf;
    std::int64_t minimal_correct;
    std::int64_t rich_correct;
  };
  std::vector<Entry> entries;
  SweepResult result;
  result.mode = mode;
  std::set<std::string> subjects;
  for (const auto& s : segments) {
    if (split.ds2_subjects.count(s.subject)) {
      throw ValidationError("sweep_threshold: test subject " + s.subject + " leaked into threshold induction");
    }
    if (!split.d2_subjects.count(s.subject)) {
      throw ValidationError("sweep_threshold: subject " + s.subject + " is not in the induction split");
    }
    if (s.minimal.size() != s.truth.size() || s.rich.size() != s.truth.size()) {
      throw ValidationError("sweep_threshold: missing branch predictions for a segment of " + s.subject);
    }
    if (s.truth.empty()) continue;
    subjects.insert(s.subject);
    Entry e{segment_confidence(s.minimal, mode).aggregate, 0, 0};
    for (std::size_t i = 0; i < s.truth.size(); ++i) {
      e.minimal_correct += s.minimal[i].argmax() == s.truth[i];
      e.rich_correct += s.rich[i] == s.truth[i];
    }
    result.total_beats += static_cast<std::int64_t>(s.truth.size());
    entries.push_back(e);
  }
  if (entries.empty()) throw ValidationError("sweep_threshold: induction split has no beats");
  result.induced_on.assign(subjects.begin(), subjects.end());

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.conf < b.conf; });
  const std::size_t n = entries.size();
  // rich_prefix[i]: Rich-correct beats among the i least confident segments.
  std::vector<std::int64_t> rich_prefix(n + 1, 0), minimal_suffix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) rich_prefix[i + 1] = rich_prefix[i] + entries[i].rich_correct;
  for (std::size_t i = n; i-- > 0;) minimal_suffix[i] = minimal_suffix[i + 1] + entries[i].minimal_correct;

  std::vector<double> taus = {0.0};
  for (const auto& e : entries) taus.push_back(e.conf);
  taus.push_back(kAboveOne);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  const SweepCandidate* best = nullptr;
  for (double tau : taus) {
    const auto routed_rich = static_cast<std::size_t>(
        std::lower_bound(entries.begin(), entries.end(), tau, [](const Entry& e, double t) { return e.conf < t; }) -
        entries.begin());
    result.candidates.push_back(
        {tau, rich_prefix[routed_rich] + minimal_suffix[routed_rich], static_cast<std::int64_t>(routed_rich)});
  }
  for (const auto& c : result.candidates) {
    if (!best || c.correct > best->correct ||
        (c.correct == best->correct &&
         (c.rich_segments < best->rich_segments || (c.rich_segments == best->rich_segments && c.tau > best->tau)))) {
      best = &c;
    }
  }
  result.tau = best->tau;
  result.rich_segments = best->rich_segments;
  result.micro_f1 = static_cast<double>(best->correct) / static_cast<double>(result.total_beats);
  return result;
}

RoutedPrediction route(const std::string& segment_id, std::span<const model::Posterior> minimal, double tau,
                       const RichPredictor& rich_predictor, AggregateMode mode) {
  RoutedPrediction r;
  r.segment_id = segment_id;
  r.confidence = segment_confidence(minimal, mode);
  if (r.confidence.aggregate >= tau) {
    r.branch = Branch::MinimalOnly;
    r.tool_calls = kMinimalToolCalls;
    for (const auto& p : minimal) r.labels.push_back(p.argmax());
    return r;
  }
  r.branch = Branch::RichAcquired;
  r.tool_calls = kRichToolCalls;
  r.labels = rich_predictor();
  if (r.labels.size() != minimal.size()) {
    throw ValidationError("route: rich predictor returned " + std::to_string(r.labels.size()) +
                          " labels for " + std::to_string(minimal.size()) + " beats");
  }
  return r;
}

RoutingReport routing_report(std::span<const RoutedPrediction> routed,
                             std::span<const std::vector<BeatClass>> truths) {
  RoutingReport rep;
  rep.segments = static_cast<std::int64_t>(routed.size());
  if (routed.empty()) return rep;
  if (!truths.empty() && truths.size() != routed.size()) {
    throw ValidationError("routing_report: one truth vector per routed segment is required");
  }
  std::int64_t calls = 0, rich = 0;
  std::array<std::int64_t, 2> correct{}, total{};
  for (std::size_t i = 0; i < routed.size(); ++i) {
    const auto& r = routed[i];
    calls += r.tool_calls;
    const std::size_t b = r.branch == Branch::MinimalOnly ? 0 : 1;
    rich += static_cast<std::int64_t>(b);
    if (truths.empty()) continue;
    if (truths[i].size() != r.labels.size()) throw ValidationError("routing_report: truth length mismatch");
    for (std::size_t k = 0; k < r.labels.size(); ++k) correct[b] += r.labels[k] == truths[i][k];
    total[b] += static_cast<std::int64_t>(r.labels.size());
  }
  rep.average_tool_calls = static_cast<double>(calls) / static_cast<double>(routed.size());
  rep.rich_fraction = static_cast<double>(rich) / static_cast<double>(routed.size());
  if (total[0] > 0) rep.minimal_branch_micro_f1 = static_cast<double>(correct[0]) / total[0];
  if (total[1] > 0) rep.rich_branch_micro_f1 = static_cast<double>(correct[1]) / total[1];
  return rep;
}

nlohmann::json threshold_artifact(const std::string& dataset, const SweepResult& sweep) {
  return {{"dataset", dataset},
          {"mode", to_string(sweep.mode)},
          {"tau", sweep.tau},
          {"induced_on", sweep.induced_on},
          {"micro_f1_at_tau", sweep.micro_f1},
          {"rich_segments", sweep.rich_segments},
          {"candidates", sweep.candidates.size()}};
}

nlohmann::json to_json(const RoutedPrediction& r) {
  std::string labels;
  for (auto l : r.labels) labels.push_back(to_char(l));
  return {{"segment", r.segment_id},
          {"confidence", r.confidence.aggregate},
          {"mode", to_string(r.confidence.mode)},
          {"branch", to_string(r.branch)},
          {"labels", labels},
          {"tool_calls", r.tool_calls}};
}

}  // namespace beatroute::routing
