#include "beatroute/ingest/segment.hpp"

#include <algorithm>
#include <cmath>

#include "beatroute/errors.hpp"

namespace beatroute {

std::int64_t segment_length(int sampling_rate_hz, double seconds) {
  const auto len = static_cast<std::int64_t>(std::floor(seconds * sampling_rate_hz));
  if (len < 1) throw ValidationError("segment length must be at least one sample");
  return len;
}

void fill_window(Segment& seg, std::span<const Beat> all_beats) {
  seg.anchors.clear();
  seg.labels.clear();
  const auto end = seg.start_sample + seg.length_samples;
  auto it = std::lower_bound(all_beats.begin(), all_beats.end(), seg.start_sample,
                             [](const Beat& b, std::int64_t s) { return b.sample < s; });
  for (; it != all_beats.end() && it->sample < end; ++it) {
    seg.anchors.push_back(it->sample - seg.start_sample);
    seg.labels.push_back(it->label);
  }
}

std::vector<Segment> cut_segments(const Record& record, double seconds) {
  const auto len = segment_length(record.sampling_rate_hz, seconds);
  const auto all = beats(record);
  const auto n = static_cast<std::int64_t>(record.length());
  std::vector<Segment> out;
  for (std::int64_t start = 0; start + len <= n; start += len) {
    Segment seg;
    seg.record_ref = record.subject_id;
    seg.start_sample = start;
    seg.length_samples = len;
    seg.origin = Origin::BaseGrid;
    fill_window(seg, all);
    out.push_back(std::move(seg));
  }
  return out;
}

void validate(const Segment& seg) {
  if (seg.anchors.size() != seg.labels.size()) {
    throw DataError("segment " + seg.record_ref + "@" + std::to_string(seg.start_sample) +
                    ": anchors/labels size mismatch");
  }
  std::int64_t prev = -1;
  for (auto a : seg.anchors) {
    if (a <= prev || a >= seg.length_samples) {
      throw DataError("segment " + seg.record_ref + "@" + std::to_string(seg.start_sample) +
                      ": anchors not strictly increasing within the window");
    }
    prev = a;
  }
}

std::string to_string(Origin o) { return o == Origin::BaseGrid ? "base" : "augmented"; }

nlohmann::json to_json(const Segment& seg) {
  std::string labels;
  for (auto l : seg.labels) labels.push_back(to_char(l));
  return {{"record", seg.record_ref},   {"start", seg.start_sample},
          {"length", seg.length_samples}, {"origin", to_string(seg.origin)},
          {"anchors", seg.anchors},     {"labels", labels}};
}

Segment segment_from_json(const nlohmann::json& j) {
  Segment seg;
  seg.record_ref = j.at("record").get<std::string>();
  seg.start_sample = j.at("start").get<std::int64_t>();
  seg.length_samples = j.at("length").get<std::int64_t>();
  const auto origin = j.at("origin").get<std::string>();
  if (origin == "base") {
    seg.origin = Origin::BaseGrid;
  } else if (origin == "augmented") {
    seg.origin = Origin::Augmented;
  } else {
    throw ParseError("segment: unknown origin '" + origin + "'");
  }
  seg.anchors = j.at("anchors").get<std::vector<std::int64_t>>();
  for (char c : j.at("labels").get<std::string>()) {
    auto cls = class_from_char(c);
    if (!cls) throw ParseError(std::string("segment: unknown label '") + c + "'");
    seg.labels.push_back(*cls);
  }
  validate(seg);
  return seg;
}

}  // namespace beatroute
