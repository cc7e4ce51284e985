#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "beatroute/errors.hpp"
#include "beatroute/peaks.hpp"
#include "beatroute/pipeline/synthetic.hpp"
#include "beatroute/rng.hpp"

using namespace beatroute;

TEST_SUITE("peaks") {
  TEST_CASE("all-zero signal yields no peaks") {
    const std::vector<double> x(3600, 0.0);
    CHECK(peaks::detect_rpeaks(x, 360).empty());
  }

  TEST_CASE("unsupported input") {
    const std::vector<double> x(1000, 0.0);
    CHECK_THROWS_AS(peaks::detect_rpeaks(x, 90), ValidationError);
    CHECK_THROWS_AS(peaks::detect_rpeaks(std::span(x).first(359), 360), ValidationError);
  }

  TEST_CASE("1 Hz bump train") {
    const auto t = synth::bump_train(60.0, 10.0, 360, 60.0, 5);
    const auto p = peaks::detect_rpeaks(t.signal, 360);
    REQUIRE(t.centers.size() == 10);
    REQUIRE(p.size() == 10);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - t.centers[i]) <= 11);
  }

  TEST_CASE("bump-train family at 40-180 bpm and 20 dB") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
      const double bpm = 40.0 + 140.0 * rng.uniform();
      const int fs = trial % 3 == 0 ? 250 : 360;
      const auto t = synth::bump_train(bpm, 10.0, fs, 20.0, 1000 + static_cast<std::uint64_t>(trial));
      const auto p = peaks::detect_rpeaks(t.signal, fs);
      const auto m = peaks::match_peaks(p, t.centers, fs);
      INFO("bpm " << bpm << " fs " << fs);
      CHECK(m.f1 == 1.0);
    }
  }

  TEST_CASE("amplitude scaling leaves detections unchanged") {
    synth::SynthConfig cfg;
    cfg.seconds = 30;
    cfg.seed = 4;
    const auto truth = synth::plan_beats(cfg, "x", 4);
    const auto x = synth::render(truth, 360, 0.02, 8);
    auto y = x;
    for (auto& v : y) v *= 2.5;
    const auto a = peaks::detect_rpeaks(x, 360);
    CHECK(a == peaks::detect_rpeaks(y, 360));
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] - a[i - 1] >= 72);
  }

  TEST_CASE("synthetic ECG at 60 bpm for 10 s") {
    synth::SynthConfig cfg;
    cfg.seconds = 10;
    cfg.bpm_min = cfg.bpm_max = 60;
    cfg.hrv = 0;
    cfg.p_s = cfg.p_v = cfg.p_f = cfg.p_q = 0;
    const auto truth = synth::plan_beats(cfg, "x", 1);
    REQUIRE(truth.beats.size() == 10);
    std::vector<std::int64_t> want;
    for (const auto& b : truth.beats) want.push_back(b.sample);
    const auto p = peaks::detect_rpeaks(synth::render(truth, 360, 0.0, 2), 360);
    CHECK(peaks::match_peaks(p, want, 360).f1 == 1.0);
  }

  TEST_CASE("synthetic ECG with ectopy and noise") {
    synth::SynthConfig cfg;
    cfg.seconds = 120;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const auto truth = synth::plan_beats(cfg, "x", seed);
      std::vector<std::int64_t> want;
      for (const auto& b : truth.beats) want.push_back(b.sample);
      const auto p = peaks::detect_rpeaks(synth::render(truth, 360, 0.02, seed + 50), 360);
      CHECK(peaks::match_peaks(p, want, 360).f1 >= 0.99);
    }
  }

  TEST_CASE("match_peaks examples") {
    const peaks::PeakSet ann = {100, 400, 700, 1000};
    auto m = peaks::match_peaks(ann, ann, 360);
    CHECK(m.true_positives == 4);
    CHECK(m.false_positives == 0);
    CHECK(m.false_negatives == 0);
    CHECK(m.f1 == 1.0);

    // 30 ms at 360 Hz = 10.8 samples; 12 is outside
    peaks::PeakSet shifted;
    for (auto a : ann) shifted.push_back(a + 12);
    m = peaks::match_peaks(shifted, ann, 360);
    CHECK(m.true_positives == 0);
    CHECK(m.false_positives == 4);
    CHECK(m.false_negatives == 4);
    shifted.clear();
    for (auto a : ann) shifted.push_back(a + 10);
    CHECK(peaks::match_peaks(shifted, ann, 360).true_positives == 4);

    peaks::PeakSet extra = ann;
    extra.insert(extra.begin() + 2, 550);
    m = peaks::match_peaks(extra, ann, 360);
    CHECK(m.true_positives == 4);
    CHECK(m.false_positives == 1);
    CHECK(m.false_negatives == 0);

    CHECK(peaks::match_peaks({}, {}, 360).f1 == 1.0);
  }

  TEST_CASE("equal distances resolve toward the earlier annotated peak") {
    const peaks::PeakSet det = {105};
    const peaks::PeakSet ann = {100, 110};
    const auto m = peaks::match_peaks(det, ann, 360);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].second == 0);
  }

  TEST_CASE("match_peaks TP is symmetric") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      peaks::PeakSet a, b;
      for (std::int64_t s = 0; s < 5000; s += 50 + static_cast<std::int64_t>(rng.index(300))) a.push_back(s);
      for (std::int64_t s = 0; s < 5000; s += 50 + static_cast<std::int64_t>(rng.index(300))) b.push_back(s);
      const auto ab = peaks::match_peaks(a, b, 360);
      const auto ba = peaks::match_peaks(b, a, 360);
      CHECK(ab.true_positives == ba.true_positives);
      CHECK(ab.false_positives == ba.false_negatives);
      CHECK(ab.false_negatives == ba.false_positives);
    }
  }

  TEST_CASE("align_labels") {
    const peaks::PeakSet ann = {100, 400, 700};
    const std::vector<BeatClass> labels = {BeatClass::N, BeatClass::V, BeatClass::S};
    auto out = peaks::align_labels(ann, ann, labels, 360);
    REQUIRE(out.size() == 3);
    CHECK(*out[0] == BeatClass::N);
    CHECK(*out[1] == BeatClass::V);
    CHECK(*out[2] == BeatClass::S);

    const peaks::PeakSet missed = {100, 700};
    out = peaks::align_labels(missed, ann, labels, 360);
    REQUIRE(out.size() == 2);
    CHECK(*out[0] == BeatClass::N);
    CHECK(*out[1] == BeatClass::S);

    const peaks::PeakSet spurious = {100, 250, 400, 700};
    out = peaks::align_labels(spurious, ann, labels, 360);
    REQUIRE(out.size() == 4);
    CHECK_FALSE(out[1].has_value());
    CHECK(*out[2] == BeatClass::V);
  }

  TEST_CASE("peak list text form") {
    const peaks::PeakSet p = {77, 370, 663};
    CHECK(peaks::format_peaks(p) == "77 370 663");
    CHECK(peaks::parse_peaks("77 370\n663") == p);
  }
}
