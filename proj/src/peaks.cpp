#include "beatroute/peaks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "beatroute/errors.hpp"

namespace beatroute::peaks {
namespace {

constexpr int kFilterRate = 200;
// Group delays of the 200 Hz cascade, in samples.
constexpr int kLowPassDelay = 5;
constexpr int kHighPassDelay = 16;

std::vector<double> resample_linear(std::span<const double> x, int from_hz, int to_hz) {
  if (from_hz == to_hz) return {x.begin(), x.end()};
  const double step = static_cast<double>(from_hz) / to_hz;
  const auto n_out = static_cast<std::size_t>(std::floor((x.size() - 1) / step)) + 1;
  std::vector<double> out(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double t = j * step;
    const auto i = static_cast<std::size_t>(t);
    const double frac = t - i;
    out[j] = i + 1 < x.size() ? x[i] * (1.0 - frac) + x[i + 1] * frac : x[i];
  }
  return out;
}

std::vector<double> band_pass(const std::vector<double>& x) {
  const auto n = x.size();
  auto at = [](const std::vector<double>& v, std::ptrdiff_t i) {
    return i >= 0 ? v[static_cast<std::size_t>(i)] : 0.0;
  };
  std::vector<double> lp(n), hp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::ptrdiff_t>(k);
    lp[k] = 2.0 * at(lp, i - 1) - at(lp, i - 2) + x[k] - 2.0 * at(x, i - 6) + at(x, i - 12);
  }
  for (auto& v : lp) v /= 36.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::ptrdiff_t>(k);
    hp[k] = at(hp, i - 1) - lp[k] / 32.0 + at(lp, i - 16) - at(lp, i - 17) + at(lp, i - 32) / 32.0;
  }
  return hp;
}

std::vector<double> derivative_squared(const std::vector<double>& x) {
  const auto n = x.size();
  auto at = [&](std::ptrdiff_t i) { return i >= 0 ? x[static_cast<std::size_t>(i)] : 0.0; };
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::ptrdiff_t>(k);
    const double d = (2.0 * x[k] + at(i - 1) - at(i - 3) - 2.0 * at(i - 4)) / 8.0;
    out[k] = d * d;
  }
  return out;
}

std::vector<double> moving_integral(const std::vector<double>& x, int width) {
  std::vector<double> out(x.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += x[k];
    if (k >= static_cast<std::size_t>(width)) acc -= x[k - static_cast<std::size_t>(width)];
    out[k] = std::max(acc, 0.0) / width;
  }
  return out;
}

/// Local maxima at least `distance` apart, tallest first (scipy find_peaks semantics).
std::vector<std::size_t> find_peaks(const std::vector<double>& x, std::size_t distance) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0) cand.push_back(i);
  }
  std::vector<std::size_t> order(cand.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[cand[a]] > x[cand[b]]; });
  std::vector<bool> keep(cand.size(), true);
  for (auto oi : order) {
    if (!keep[oi]) continue;
    for (std::size_t j = oi; j-- > 0 && cand[oi] - cand[j] < distance;) keep[j] = false;
    for (std::size_t j = oi + 1; j < cand.size() && cand[j] - cand[oi] < distance; ++j) keep[j] = false;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (keep[i]) out.push_back(cand[i]);
  }
  return out;
}

/// Index of the largest |x| in [lo, hi] (clamped), leftmost on ties.
std::size_t argmax_abs(const std::vector<double>& x, std::ptrdiff_t lo, std::ptrdiff_t hi) {
  lo = std::max<std::ptrdiff_t>(lo, 0);
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(x.size()) - 1);
  auto best = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
  for (auto i = lo; i <= hi; ++i) {
    if (std::abs(x[static_cast<std::size_t>(i)]) > std::abs(x[best])) best = static_cast<std::size_t>(i);
  }
  return best;
}

struct Levels {
  double signal = 0.0;
  double noise = 0.0;
  double threshold() const { return noise + 0.25 * std::abs(signal - noise); }
  void on_signal(double v, double weight = 0.125) { signal = weight * v + (1.0 - weight) * signal; }
  void on_noise(double v) { noise = 0.125 * v + 0.875 * noise; }
};

}  // namespace

PeakSet detect_rpeaks(std::span<const double> signal, int sampling_rate_hz, const DetectorConfig& config) {
  if (sampling_rate_hz < 100) {
    throw ValidationError("detect_rpeaks: unsupported sampling rate " +
                          std::to_string(sampling_rate_hz) + " Hz (minimum 100)");
  }
  if (signal.size() < static_cast<std::size_t>(sampling_rate_hz)) {
    throw ValidationError("detect_rpeaks: signal shorter than one second");
  }
  const double fs = sampling_rate_hz;
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / signal.size();
  std::vector<double> centered(signal.size());
  std::transform(signal.begin(), signal.end(), centered.begin(), [&](double v) { return v - mean; });

  // Constant padding keeps filter start-up transients and the integrator lag
  // away from beats near either edge.
  const auto resampled = resample_linear(centered, sampling_rate_hz, kFilterRate);
  const std::size_t pad = kFilterRate;
  std::vector<double> x(pad, resampled.front());
  x.insert(x.end(), resampled.begin(), resampled.end());
  x.insert(x.end(), pad, resampled.back());

  const auto bp = band_pass(x);
  const int width = std::max(1, static_cast<int>(std::lround(config.integration_s * kFilterRate)));
  const auto mwi = moving_integral(derivative_squared(bp), width);
  if (*std::max_element(mwi.begin(), mwi.end()) <= 0.0) return {};

  const auto refractory = static_cast<std::size_t>(std::lround(config.refractory_s * kFilterRate));
  const auto bp_search = static_cast<std::ptrdiff_t>(std::lround(0.150 * kFilterRate));
  const auto slope_span = static_cast<std::size_t>(std::lround(0.075 * kFilterRate));
  const auto t_wave_window = static_cast<std::size_t>(std::lround(0.360 * kFilterRate));

  // Learning phase over the first seconds of real signal.
  const std::size_t learn_end =
      std::min(x.size() - pad, pad + static_cast<std::size_t>(config.learning_s * kFilterRate));
  Levels li, lf;
  {
    double max_i = 0.0, sum_i = 0.0, max_f = 0.0, sum_f = 0.0;
    for (std::size_t k = pad; k < learn_end; ++k) {
      max_i = std::max(max_i, mwi[k]);
      sum_i += mwi[k];
      max_f = std::max(max_f, std::abs(bp[k]));
      sum_f += std::abs(bp[k]);
    }
    const double count = static_cast<double>(learn_end - pad);
    li.signal = max_i / 3.0;
    li.noise = sum_i / count / 2.0;
    lf.signal = max_f / 3.0;
    lf.noise = sum_f / count / 2.0;
  }
  double thr_i = li.threshold(), thr_f = lf.threshold();

  auto slope_at = [&](std::size_t loc) {
    const std::size_t lo = loc >= slope_span ? loc - slope_span : 0;
    double best = 0.0;
    for (std::size_t k = lo + 1; k <= loc; ++k) best = std::max(best, std::abs(mwi[k] - mwi[k - 1]));
    return best;
  };
  auto bp_peak = [&](std::size_t loc) {
    return argmax_abs(bp, static_cast<std::ptrdiff_t>(loc) - bp_search, static_cast<std::ptrdiff_t>(loc));
  };

  std::vector<std::size_t> qrs;      // integrator locations
  std::vector<std::size_t> qrs_bp;   // band-pass fiducials
  std::vector<double> rr_history;    // 200 Hz samples
  double rr_average = 0.0;

  bool irregular = false;
  auto accept = [&](std::size_t loc, std::size_t bp_loc) {
    if (!qrs.empty()) {
      rr_history.push_back(static_cast<double>(loc - qrs.back()));
      if (rr_history.size() > 8) rr_history.erase(rr_history.begin());
      const double avg = std::accumulate(rr_history.begin(), rr_history.end(), 0.0) / rr_history.size();
      const double last = rr_history.back();
      // An irregular interval halves the thresholds for the next decision and
      // leaves the regular-rhythm average in place.
      irregular = rr_history.size() >= 2 && (last <= 0.92 * avg || last >= 1.16 * avg);
      if (!irregular || rr_average == 0.0) rr_average = avg;
    }
    qrs.push_back(loc);
    qrs_bp.push_back(bp_loc);
  };

  for (auto loc : find_peaks(mwi, refractory)) {
    const double pk = mwi[loc];
    const auto bp_loc = bp_peak(loc);
    const double bp_val = std::abs(bp[bp_loc]);

    // Search-back for a missed beat when the gap exceeds 1.66 x RR average.
    if (!qrs.empty() && rr_average > 0.0 &&
        static_cast<double>(loc - qrs.back()) >= config.searchback_factor * rr_average) {
      const std::size_t lo = qrs.back() + refractory;
      const std::size_t hi = loc >= refractory ? loc - refractory : 0;
      if (hi > lo) {
        std::size_t best = lo;
        for (std::size_t k = lo; k <= hi; ++k) {
          if (mwi[k] > mwi[best]) best = k;
        }
        const auto sb_bp = bp_peak(best);
        if (mwi[best] > 0.5 * thr_i && std::abs(bp[sb_bp]) > 0.5 * thr_f) {
          accept(best, sb_bp);
          li.on_signal(mwi[best], 0.25);
          lf.on_signal(std::abs(bp[sb_bp]), 0.25);
        }
      }
    }

    const double gate_i = irregular ? 0.5 * thr_i : thr_i;
    const double gate_f = irregular ? 0.5 * thr_f : thr_f;
    if (pk >= gate_i && pk > 0.0) {
      bool t_wave = false;
      if (qrs.size() >= 3 && loc - qrs.back() <= t_wave_window) {
        t_wave = slope_at(loc) <= 0.5 * slope_at(qrs.back());
      }
      if (t_wave) {
        li.on_noise(pk);
        lf.on_noise(bp_val);
      } else if (bp_val >= gate_f) {
        accept(loc, bp_loc);
        li.on_signal(pk);
        lf.on_signal(bp_val);
      } else {
        li.on_noise(pk);
        lf.on_noise(bp_val);
      }
    } else {
      li.on_noise(pk);
      lf.on_noise(bp_val);
    }
    thr_i = li.threshold();
    thr_f = lf.threshold();
  }

  // Map band-pass fiducials back to native samples and refine on the signal.
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  const auto refine = static_cast<std::ptrdiff_t>(std::lround(config.refine_s * fs));
  const auto baseline_half = static_cast<std::ptrdiff_t>(std::lround(0.1 * fs));
  std::vector<std::pair<std::int64_t, double>> found;
  for (auto b : qrs_bp) {
    const double t200 = static_cast<double>(b) - static_cast<double>(pad) - (kLowPassDelay + kHighPassDelay);
    const auto centre = static_cast<std::ptrdiff_t>(std::lround(t200 * fs / kFilterRate));
    if (centre < -refine || centre >= n + refine) continue;
    const auto b_lo = std::max<std::ptrdiff_t>(0, centre - baseline_half);
    const auto b_hi = std::min<std::ptrdiff_t>(n - 1, centre + baseline_half);
    if (b_lo > b_hi) continue;
    double base = 0.0;
    for (auto k = b_lo; k <= b_hi; ++k) base += signal[static_cast<std::size_t>(k)];
    base /= static_cast<double>(b_hi - b_lo + 1);
    const auto lo = std::max<std::ptrdiff_t>(0, centre - refine);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, centre + refine);
    if (lo > hi) continue;
    auto best = lo;
    for (auto k = lo; k <= hi; ++k) {
      if (std::abs(signal[static_cast<std::size_t>(k)] - base) >
          std::abs(signal[static_cast<std::size_t>(best)] - base)) {
        best = k;
      }
    }
    found.emplace_back(best, std::abs(signal[static_cast<std::size_t>(best)] - base));
  }
  std::sort(found.begin(), found.end());

  const auto min_gap = static_cast<std::int64_t>(std::lround(config.refractory_s * fs));
  PeakSet out;
  std::vector<double> strength;
  for (const auto& [pos, amp] : found) {
    if (!out.empty() && pos - out.back() < min_gap) {
      if (amp > strength.back()) {
        out.back() = pos;
        strength.back() = amp;
      }
      continue;
    }
    out.push_back(pos);
    strength.push_back(amp);
  }
  return out;
}

MatchReport match_peaks(std::span<const std::int64_t> detected, std::span<const std::int64_t> annotated,
                        int sampling_rate_hz, double tolerance_ms) {
  const double tol = tolerance_ms * sampling_rate_hz / 1000.0;
  std::vector<std::tuple<std::int64_t, std::size_t, std::size_t>> cand;  // (distance, ann, det)
  std::size_t lo = 0;
  for (std::size_t a = 0; a < annotated.size(); ++a) {
    while (lo < detected.size() && static_cast<double>(annotated[a] - detected[lo]) > tol) ++lo;
    for (std::size_t d = lo; d < detected.size(); ++d) {
      const auto dist = std::abs(detected[d] - annotated[a]);
      if (static_cast<double>(detected[d] - annotated[a]) > tol) break;
      if (static_cast<double>(dist) <= tol) cand.emplace_back(dist, a, d);
    }
  }
  std::sort(cand.begin(), cand.end());
  std::vector<bool> used_d(detected.size()), used_a(annotated.size());
  MatchReport r;
  for (const auto& [dist, a, d] : cand) {
    if (used_d[d] || used_a[a]) continue;
    used_d[d] = used_a[a] = true;
    r.pairs.emplace_back(d, a);
  }
  std::sort(r.pairs.begin(), r.pairs.end());
  r.true_positives = static_cast<std::int64_t>(r.pairs.size());
  r.false_positives = static_cast<std::int64_t>(detected.size()) - r.true_positives;
  r.false_negatives = static_cast<std::int64_t>(annotated.size()) - r.true_positives;
  const auto denom = 2 * r.true_positives + r.false_positives + r.false_negatives;
  r.f1 = denom == 0 ? 1.0 : 2.0 * r.true_positives / static_cast<double>(denom);
  return r;
}

std::vector<std::optional<BeatClass>> align_labels(std::span<const std::int64_t> detected,
                                                   std::span<const std::int64_t> annotated,
                                                   std::span<const BeatClass> labels,
                                                   int sampling_rate_hz, double tolerance_ms) {
  if (annotated.size() != labels.size()) {
    throw ValidationError("align_labels: anchors and labels differ in length");
  }
  std::vector<std::optional<BeatClass>> out(detected.size());
  for (const auto& [d, a] : match_peaks(detected, annotated, sampling_rate_hz, tolerance_ms).pairs) {
    out[d] = labels[a];
  }
  return out;
}

std::string format_peaks(std::span<const std::int64_t> peaks) {
  std::string out;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(peaks[i]);
  }
  return out;
}

PeakSet parse_peaks(std::string_view text) {
  std::istringstream in{std::string(text)};
  PeakSet out;
  std::string tok;
  while (in >> tok) {
    if (!tok.empty() && tok.back() == '.') tok.pop_back();
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.empty()) throw ParseError("peak list: bad token '" + tok + "'");
    if (!out.empty() && v <= out.back()) throw ParseError("peak list: positions must increase");
    out.push_back(v);
  }
  return out;
}

}  // namespace beatroute::peaks
