#include "beatroute/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "beatroute/errors.hpp"

namespace beatroute::augment {

TargetRatios default_targets() {
  return {{BeatClass::S, 0.10}, {BeatClass::V, 0.10}, {BeatClass::F, 0.05}};
}

std::vector<double> default_ladder() { return {0.2, 0.35, 0.5, 0.65, 0.8}; }

AugmentPlan plan_augmentation(std::span<const BeatRef> training_beats, const TargetRatios& targets,
                              std::span<const double> ladder) {
  for (const auto& [cls, ratio] : targets) {
    if (!(ratio > 0.0) || ratio > 1.0) {
      throw ValidationError(std::string("augment: target ratio for ") + to_char(cls) +
                            " must lie in (0, 1]");
    }
    if (cls == BeatClass::N) throw ValidationError("augment: N is the reference class");
  }
  if (ladder.empty()) throw ValidationError("augment: offset ladder is empty");
  for (double f : ladder) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("augment: offsets must lie strictly inside (0, 1)");
  }

  AugmentPlan plan;
  plan.target_ratio = targets;
  plan.offsets.assign(ladder.begin(), ladder.end());
  std::array<std::vector<const BeatRef*>, kNumClasses> by_class;
  for (const auto& b : training_beats) {
    ++plan.class_counts[index_of(b.label)];
    by_class[index_of(b.label)].push_back(&b);
  }
  const auto n_normal = plan.class_counts[index_of(BeatClass::N)];

  for (const auto& [cls, ratio] : targets) {
    const auto n = plan.class_counts[index_of(cls)];
    const auto target = std::llround(ratio * static_cast<double>(n_normal));
    if (n == 0 || n >= target) continue;
    const std::int64_t deficit = target - n;
    auto per_beat = deficit / n;
    auto extra = deficit % n;
    const auto cap = static_cast<std::int64_t>(ladder.size());
    if (per_beat >= cap) {
      per_beat = cap;
      extra = 0;
    }
    const auto& members = by_class[index_of(cls)];
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t bonus = ((i + 1) * extra) / n - (i * extra) / n;
      const auto count = per_beat + bonus;
      const auto& b = *members[static_cast<std::size_t>(i)];
      for (std::int64_t k = 0; k < count; ++k) {
        plan.assignments.push_back({b.record, b.beat_index, b.sample, b.label,
                                    ladder[static_cast<std::size_t>(k)]});
      }
      plan.planned[index_of(cls)] += count;
    }
  }
  return plan;
}

std::optional<Segment> reanchor(const Record& record, std::span<const Beat> record_beats,
                                std::int64_t beat_sample, double fraction, std::int64_t length) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("reanchor: fraction must lie strictly inside (0, 1)");
  }
  const auto n = static_cast<std::int64_t>(record.length());
  if (length <= 0 || n < length) return std::nullopt;
  const auto offset = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(length)));
  const auto start = std::clamp<std::int64_t>(beat_sample - offset, 0, n - length);

  Segment seg;
  seg.record_ref = record.subject_id;
  seg.start_sample = start;
  seg.length_samples = length;
  seg.origin = Origin::Augmented;
  fill_window(seg, record_beats);
  return seg;
}

std::vector<Segment> dedup(std::vector<Segment> segments) {
  std::set<std::pair<std::string, std::int64_t>> base;
  for (const auto& s : segments) {
    if (s.origin == Origin::BaseGrid) base.emplace(s.record_ref, s.start_sample);
  }
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::vector<Segment> out;
  out.reserve(segments.size());
  for (auto& s : segments) {
    auto key = std::make_pair(s.record_ref, s.start_sample);
    if (s.origin == Origin::Augmented && base.count(key)) continue;
    if (!seen.insert(std::move(key)).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const AugmentPlan& plan) {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& [cls, r] : plan.target_ratio) targets[std::string(1, to_char(cls))] = r;
  nlohmann::json counts = nlohmann::json::object();
  nlohmann::json planned = nlohmann::json::object();
  for (auto c : kAllClasses) {
    counts[std::string(1, to_char(c))] = plan.class_counts[index_of(c)];
    planned[std::string(1, to_char(c))] = plan.planned[index_of(c)];
  }
  nlohmann::json assignments = nlohmann::json::array();
  for (const auto& a : plan.assignments) {
    assignments.push_back({{"record", a.record},
                           {"beat_index", a.beat_index},
                           {"sample", a.sample},
                           {"label", std::string(1, to_char(a.label))},
                           {"fraction", a.fraction}});
  }
  return {{"targets", targets},   {"offsets", plan.offsets},        {"class_counts", counts},
          {"planned", planned},   {"assignments", assignments}};
}

}  // namespace beatroute::augment
