#include "beatroute/evalx.hpp"

#include <algorithm>
#include <cstdio>

#include "beatroute/errors.hpp"

namespace beatroute::evalx {
namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

ClassMetrics compute_metrics(std::span<const BeatClass> pred, std::span<const BeatClass> truth,
                             std::span<const BeatClass> unmatched_pred, std::span<const BeatClass> missed_true) {
  if (pred.size() != truth.size()) {
    throw ValidationError("compute_metrics: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(truth.size()) + " labels");
  }
  if (pred.empty() && unmatched_pred.empty() && missed_true.empty()) {
    throw ValidationError("compute_metrics: nothing to score");
  }
  ClassMetrics m;
  m.n = static_cast<std::int64_t>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) ++m.confusion[index_of(truth[i])][index_of(pred[i])];
  for (auto c : unmatched_pred) ++m.unmatched_pred[index_of(c)];
  for (auto c : missed_true) ++m.missed_true[index_of(c)];

  std::int64_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  int macro_n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::int64_t tp = m.confusion[c][c];
    std::int64_t fp = m.unmatched_pred[c], fn = m.missed_true[c];
    for (std::size_t o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += m.confusion[o][c];
      fn += m.confusion[c][o];
    }
    m.support[c] = tp + fn;
    m.precision[c] = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall[c] = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const auto denom = 2 * tp + fp + fn;
    m.f1[c] = denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    if (m.support[c] > 0) {
      macro_sum += m.f1[c];
      ++macro_n;
    }
  }
  m.macro_f1 = macro_n > 0 ? macro_sum / macro_n : 0.0;
  const auto denom = 2 * tp_all + fp_all + fn_all;
  m.micro_f1 = denom > 0 ? 2.0 * static_cast<double>(tp_all) / static_cast<double>(denom) : 0.0;
  return m;
}

ConfusionRows confusion_rows(const ClassMetrics& m) {
  ConfusionRows r;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    std::int64_t total = 0;
    for (auto v : m.confusion[t]) total += v;
    r.empty_row[t] = total == 0;
    if (total == 0) continue;
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      r.rows[t][p] = static_cast<double>(m.confusion[t][p]) / static_cast<double>(total);
    }
  }
  return r;
}

std::vector<double> default_bin_edges() {
  return {0.0,   0.3,   0.5,   0.6,   0.7,   0.8,   0.85,  0.9,    0.95,   0.98, 0.985,
          0.99,  0.992, 0.994, 0.996, 0.997, 0.998, 0.999, 0.9995, 0.9999, 1.0};
}

std::vector<ProfileBin> confidence_profile(std::span<const ProfileSegment> segments, std::span<const double> edges) {
  if (segments.empty()) throw ValidationError("confidence_profile: no segments");
  std::vector<double> e(edges.begin(), edges.end());
  if (e.empty()) e = default_bin_edges();
  if (e.size() < 2 || !std::is_sorted(e.begin(), e.end())) {
    throw ValidationError("confidence_profile: bin edges must be sorted with at least two entries");
  }
  const std::size_t n_bins = e.size() - 1;
  std::vector<ProfileBin> bins(n_bins);
  std::vector<std::array<std::int64_t, 2>> correct(n_bins, {0, 0});
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lo = e[b];
    bins[b].hi = e[b + 1];
  }
  for (const auto& s : segments) {
    if (s.minimal.size() != s.truth.size() || s.rich.size() != s.truth.size()) {
      throw ValidationError("confidence_profile: branch outputs and truths differ in length");
    }
    auto it = std::upper_bound(e.begin(), e.end(), s.confidence);
    std::size_t b = it == e.begin() ? 0 : static_cast<std::size_t>(it - e.begin()) - 1;
    b = std::min(b, n_bins - 1);
    ++bins[b].segments;
    bins[b].beats += static_cast<std::int64_t>(s.truth.size());
    for (std::size_t k = 0; k < s.truth.size(); ++k) {
      correct[b][0] += s.minimal[k] == s.truth[k];
      correct[b][1] += s.rich[k] == s.truth[k];
    }
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins[b].beats == 0) continue;
    bins[b].minimal_f1 = static_cast<double>(correct[b][0]) / static_cast<double>(bins[b].beats);
    bins[b].rich_f1 = static_cast<double>(correct[b][1]) / static_cast<double>(bins[b].beats);
  }
  return bins;
}

std::optional<double> crossover(std::span<const ProfileBin> profile) {
  bool rich_led = false;
  for (const auto& b : profile) {
    if (!b.minimal_f1 || !b.rich_f1) continue;
    if (*b.rich_f1 > *b.minimal_f1) {
      rich_led = true;
    } else if (rich_led) {
      return b.lo;
    }
  }
  return std::nullopt;
}

Perturbed stress_mask(const Segment& seg, std::size_t k) {
  if (k >= seg.anchors.size()) throw ValidationError("stress_mask: beat index out of range");
  Perturbed p;
  for (std::size_t i = 0; i < seg.anchors.size(); ++i) {
    if (i == k) continue;
    p.anchors.push_back(seg.anchors[i]);
    p.labels.push_back(seg.labels[i]);
    p.source.push_back(i);
  }
  return p;
}

std::optional<Perturbed> stress_mislocalize(const Segment& seg, std::size_t k, std::int64_t offset) {
  const auto mag = offset < 0 ? -offset : offset;
  if (mag < kMinShift || mag > kMaxShift) {
    throw ValidationError("stress_mislocalize: offset " + std::to_string(offset) + " outside +-[6, 30]");
  }
  if (k >= seg.anchors.size()) throw ValidationError("stress_mislocalize: beat index out of range");
  const auto moved = seg.anchors[k] + offset;
  if (moved < 0 || moved >= seg.length_samples) return std::nullopt;
  if (k > 0 && moved <= seg.anchors[k - 1]) return std::nullopt;
  if (k + 1 < seg.anchors.size() && moved >= seg.anchors[k + 1]) return std::nullopt;
  Perturbed p;
  p.anchors = seg.anchors;
  p.anchors[k] = moved;
  p.labels = seg.labels;
  p.source.resize(seg.anchors.size());
  for (std::size_t i = 0; i < p.source.size(); ++i) p.source[i] = i;
  p.interfered = k;
  return p;
}

std::array<std::optional<double>, kNumClasses> stress_delta(const ClassMetrics& clean, const ClassMetrics& stressed) {
  std::array<std::optional<double>, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::int64_t clean_pred = clean.unmatched_pred[c], stress_pred = stressed.unmatched_pred[c];
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      clean_pred += clean.confusion[t][c];
      stress_pred += stressed.confusion[t][c];
    }
    if (clean.support[c] == 0 && stressed.support[c] == 0 && clean_pred == 0 && stress_pred == 0) continue;
    out[c] = clean.f1[c] - stressed.f1[c];
  }
  return out;
}

std::string stress_csv(const StressTable& t) {
  std::string out = "Label,Mask Interfered,Mask Non-interfered,Mislocalize Interfered,Mislocalize Non-interfered\n";
  for (auto c : kAllClasses) {
    const auto i = index_of(c);
    out += std::string(1, to_char(c)) + ",--," + cell(t.mask_non_interfered[i]) + "," +
           cell(t.mislocalize_interfered[i]) + "," + cell(t.mislocalize_non_interfered[i]) + "\n";
  }
  return out;
}

nlohmann::json to_json(const ClassMetrics& m) {
  nlohmann::json per_class = nlohmann::json::object();
  for (auto c : kAllClasses) {
    const auto i = index_of(c);
    per_class[std::string(1, to_char(c))] = {{"precision", m.precision[i]},
                                             {"recall", m.recall[i]},
                                             {"f1", m.f1[i]},
                                             {"support", m.support[i]}};
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : m.confusion) confusion.push_back(row);
  return {{"macro_f1", m.macro_f1}, {"micro_f1", m.micro_f1}, {"beats", m.n},
          {"per_class", per_class}, {"confusion", confusion}};
}

std::string confusion_csv(const ClassMetrics& m) {
  std::string out = "true\\pred,N,S,V,F\n";
  for (auto t : kAllClasses) {
    out += std::string(1, to_char(t));
    for (auto p : kAllClasses) out += "," + std::to_string(m.confusion[index_of(t)][index_of(p)]);
    out += "\n";
  }
  return out;
}

}  // namespace beatroute::evalx
