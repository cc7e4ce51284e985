#include "beatroute/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "beatroute/errors.hpp"

namespace beatroute::features {
namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RrQuad rr_quadruple(std::span<const std::int64_t> anchors, std::size_t k) {
  if (anchors.empty()) throw ValidationError("rr_quadruple: segment has no anchors");
  if (k >= anchors.size()) throw ValidationError("rr_quadruple: beat index out of range");
  auto pre_of = [&](std::size_t i) {
    return static_cast<double>(i == 0 ? anchors[0] : anchors[i] - anchors[i - 1]);
  };
  RrQuad rr;
  rr.pre = pre_of(k);
  rr.next = k + 1 < anchors.size() ? static_cast<double>(anchors[k + 1] - anchors[k]) : rr.pre;
  const std::size_t first = k + 1 > kLocalBeats ? k + 1 - kLocalBeats : 0;
  double sum = 0.0;
  for (std::size_t i = first; i <= k; ++i) sum += pre_of(i);
  rr.local = sum / static_cast<double>(k - first + 1);
  if (k == 0) {
    rr.global = rr.local;
  } else {
    double g = 0.0;
    for (std::size_t i = 0; i < k; ++i) g += pre_of(i);
    rr.global = g / static_cast<double>(k);
  }
  return rr;
}

RrQuad rounded(const RrQuad& rr) {
  return {std::nearbyint(rr.pre), std::nearbyint(rr.next), std::nearbyint(rr.local), std::nearbyint(rr.global)};
}

RrQuad normalize_rr(const RrQuad& rr, double divisor) {
  if (!(divisor > 0.0)) throw ValidationError("normalize_rr: divisor must be positive");
  return {rr.pre / divisor, rr.next / divisor, rr.local / divisor, rr.global / divisor};
}

RrQuad normalize_rr(const RrQuad& rr, const RrDivisor& divisor) {
  for (double d : divisor.by_component) {
    if (!(d > 0.0)) throw ValidationError("normalize_rr: divisor must be positive");
  }
  const auto& d = divisor.by_component;
  return {rr.pre / d[0], rr.next / d[1], rr.local / d[2], rr.global / d[3]};
}

RrDivisor record_divisor(std::span<const Segment> base_segments) {
  std::array<double, 4> sum{};
  std::size_t n = 0;
  for (const auto& seg : base_segments) {
    for (std::size_t k = 0; k < seg.anchors.size(); ++k) {
      const auto rr = rr_quadruple(seg.anchors, k);
      sum[0] += rr.pre;
      sum[1] += rr.next;
      sum[2] += rr.local;
      sum[3] += rr.global;
      ++n;
    }
  }
  RrDivisor d;
  if (n == 0) return d;
  for (std::size_t i = 0; i < 4; ++i) d.by_component[i] = sum[i] / static_cast<double>(n);
  return d;
}

RrDivisor segment_divisor(std::span<const std::int64_t> anchors) {
  RrDivisor d;
  if (anchors.empty()) return d;
  // Pre-RR values telescope to the last anchor.
  const double mean = static_cast<double>(anchors.back()) / static_cast<double>(anchors.size());
  if (mean > 0.0) d.by_component.fill(mean);
  return d;
}

BeatWindow beat_window(std::span<const double> segment_signal, std::int64_t anchor, int sampling_rate_hz) {
  BeatWindow w;
  const auto n = static_cast<std::int64_t>(segment_signal.size());
  if (sampling_rate_hz == kReferenceRate) {
    for (std::size_t j = 0; j < kWindow; ++j) {
      const auto idx = anchor - static_cast<std::int64_t>(kROffset) + static_cast<std::int64_t>(j);
      if (idx < 0) {
        w.padded_left = true;
      } else if (idx >= n) {
        w.padded_right = true;
      } else {
        w.samples[j] = segment_signal[static_cast<std::size_t>(idx)];
      }
    }
    return w;
  }
  const double step = static_cast<double>(sampling_rate_hz) / kReferenceRate;
  for (std::size_t j = 0; j < kWindow; ++j) {
    const double t = static_cast<double>(anchor) + (static_cast<double>(j) - kROffset) * step;
    if (t < 0.0) {
      w.padded_left = true;
      continue;
    }
    if (t > static_cast<double>(n - 1)) {
      w.padded_right = true;
      continue;
    }
    const auto i = static_cast<std::size_t>(std::floor(t));
    const double frac = t - static_cast<double>(i);
    w.samples[j] = i + 1 < segment_signal.size()
                       ? segment_signal[i] * (1.0 - frac) + segment_signal[i + 1] * frac
                       : segment_signal[i];
  }
  return w;
}

double r_amplitude(std::span<const double> segment_signal, std::int64_t anchor) {
  if (anchor < 0 || anchor >= static_cast<std::int64_t>(segment_signal.size())) {
    throw ValidationError("r_amplitude: anchor outside the segment");
  }
  return segment_signal[static_cast<std::size_t>(anchor)];
}

std::pair<double, double> moments(std::span<const double> block) {
  if (block.empty()) return {0.0, 0.0};
  const auto n = static_cast<double>(block.size());
  const double mean = std::accumulate(block.begin(), block.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, max_abs = 0.0;
  for (double v : block) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
    max_abs = std::max(max_abs, std::abs(v));
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  // Spread at rounding level of the values counts as constant.
  const double floor = 1e-10 * max_abs;
  if (max_abs == 0.0 || m2 <= floor * floor) return {0.0, 0.0};
  return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

std::array<double, 10> hos_features(const BeatWindow& window) {
  constexpr std::size_t kBlocks = 5;
  constexpr std::size_t kBlock = kWindow / kBlocks;
  std::array<double, 10> out{};
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const auto [skew, kurt] = moments(std::span(window.samples).subspan(b * kBlock, kBlock));
    out[b] = skew;
    out[kBlocks + b] = kurt;
  }
  return out;
}

std::array<double, 4> my_morph(const BeatWindow& window) {
  struct Landmark {
    std::size_t lo, hi;
    bool maximum;
  };
  constexpr std::array<Landmark, 4> kLandmarks = {
      Landmark{0, 40, true}, Landmark{75, 85, false}, Landmark{95, 105, false}, Landmark{150, 180, true}};
  const auto& s = window.samples;
  std::array<double, 4> xs{}, ys{};
  for (std::size_t m = 0; m < kLandmarks.size(); ++m) {
    const auto& lm = kLandmarks[m];
    std::size_t best = lm.lo;
    for (std::size_t i = lm.lo + 1; i < lm.hi; ++i) {
      if (lm.maximum ? s[i] > s[best] : s[i] < s[best]) best = i;
    }
    xs[m] = static_cast<double>(best);
    ys[m] = s[best];
  }
  const double r_x = static_cast<double>(kROffset);
  const double r_y = s[kROffset];
  const double x_min = *std::min_element(xs.begin(), xs.end());
  const double x_max = *std::max_element(xs.begin(), xs.end());
  const double y_min = std::min(r_y, *std::min_element(ys.begin(), ys.end()));
  const double y_max = std::max(r_y, *std::max_element(ys.begin(), ys.end()));
  const double x_span = x_max - x_min;
  const double y_span = y_max - y_min;
  auto nx = [&](double x) { return (x - x_min) / x_span; };
  auto ny = [&](double y) { return y_span > 0.0 ? (y - y_min) / y_span : 0.0; };
  std::array<double, 4> out{};
  for (std::size_t m = 0; m < 4; ++m) {
    out[m] = std::hypot(nx(r_x) - nx(xs[m]), ny(r_y) - ny(ys[m]));
  }
  return out;
}

FeatureVector assemble(const BeatFeatures& f) {
  FeatureVector v{};
  std::size_t i = 0;
  for (const auto* q : {&f.rr, &f.norm_rr}) {
    v[i++] = q->pre;
    v[i++] = q->next;
    v[i++] = q->local;
    v[i++] = q->global;
  }
  v[i++] = f.amp;
  for (double h : f.hos) v[i++] = h;
  for (double m : f.my_morph) v[i++] = m;
  return v;
}

BeatFeatures split(const FeatureVector& v) {
  BeatFeatures f;
  f.rr = {v[0], v[1], v[2], v[3]};
  f.norm_rr = {v[4], v[5], v[6], v[7]};
  f.amp = v[8];
  std::copy(v.begin() + 9, v.begin() + 19, f.hos.begin());
  std::copy(v.begin() + 19, v.end(), f.my_morph.begin());
  return f;
}

std::vector<std::size_t> minimal_mask() {
  std::vector<std::size_t> m(8);
  std::iota(m.begin(), m.end(), 0);
  return m;
}

std::vector<std::size_t> rich_mask() {
  std::vector<std::size_t> m(kDim);
  std::iota(m.begin(), m.end(), 0);
  return m;
}

std::array<std::string, kDim> column_names() {
  return {"rr_pre",   "rr_next",   "rr_local",  "rr_global", "nrr_pre", "nrr_next",
          "nrr_local", "nrr_global", "amp",      "skew_1",    "skew_2",  "skew_3",
          "skew_4",   "skew_5",    "kurt_1",    "kurt_2",    "kurt_3",  "kurt_4",
          "kurt_5",   "morph_1",   "morph_2",   "morph_3",   "morph_4"};
}

std::vector<BeatFeatures> extract_segment(std::span<const double> segment_signal,
                                          std::span<const std::int64_t> anchors,
                                          int sampling_rate_hz, const RrDivisor& divisor) {
  std::vector<BeatFeatures> out;
  out.reserve(anchors.size());
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const auto rr = rr_quadruple(anchors, k);
    const auto window = beat_window(segment_signal, anchors[k], sampling_rate_hz);
    BeatFeatures f;
    f.rr = rounded(rr);
    f.norm_rr = normalize_rr(rr, divisor);
    f.amp = r_amplitude(segment_signal, anchors[k]);
    f.hos = hos_features(window);
    f.my_morph = my_morph(window);
    out.push_back(f);
  }
  return out;
}

std::string format_transcript(std::int64_t anchor, const BeatFeatures& f) {
  std::ostringstream out;
  auto ints = [](const RrQuad& q) {
    return std::to_string(std::llrint(q.pre)) + "," + std::to_string(std::llrint(q.next)) + "," +
           std::to_string(std::llrint(q.local)) + "," + std::to_string(std::llrint(q.global));
  };
  auto list = [](auto&& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ",";
      s += fixed4(values[i]);
    }
    return s;
  };
  const std::array<double, 4> nrr = {f.norm_rr.pre, f.norm_rr.next, f.norm_rr.local, f.norm_rr.global};
  out << '[' << anchor << ":RR=" << ints(f.rr) << ";norm_RR=" << list(nrr) << ";amp=" << fixed4(f.amp)
      << ";HOS=[" << list(f.hos) << "];myMorph=[" << list(f.my_morph) << "]]";
  return out.str();
}

std::string csv_header() {
  std::string h = "subject,segment,anchor,label";
  for (const auto& c : column_names()) h += "," + c;
  return h;
}

std::string to_csv(const FeatureRow& row) {
  std::string line = row.subject + "," + std::to_string(row.segment) + "," + std::to_string(row.anchor) + ",";
  line += row.label ? std::string(1, to_char(*row.label)) : std::string("-");
  for (double v : row.values) line += "," + exact(v);
  return line;
}

FeatureRow parse_csv_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r' && c != '\n') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  if (cells.size() != 4 + kDim) {
    throw ParseError("feature csv: expected " + std::to_string(4 + kDim) + " cells, got " +
                     std::to_string(cells.size()));
  }
  FeatureRow row;
  row.subject = cells[0];
  try {
    row.segment = std::stoll(cells[1]);
    row.anchor = std::stoll(cells[2]);
    for (std::size_t i = 0; i < kDim; ++i) row.values[i] = std::stod(cells[4 + i]);
  } catch (const std::exception&) {
    throw ParseError("feature csv: malformed number in row for subject " + row.subject);
  }
  if (cells[3] != "-") {
    if (cells[3].size() != 1 || !class_from_char(cells[3][0])) {
      throw ParseError("feature csv: bad label '" + cells[3] + "'");
    }
    row.label = class_from_char(cells[3][0]);
  }
  return row;
}

}  // namespace beatroute::features
