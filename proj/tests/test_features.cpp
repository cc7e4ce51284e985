#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "beatroute/errors.hpp"
#include "beatroute/features.hpp"

using namespace beatroute;
using features::RrQuad;

namespace {

const std::vector<std::int64_t> kAnchors = {77, 370, 663, 947, 1231, 1515, 1809,
                                            2045, 2403, 2706, 2998, 3283, 3560};

// Straight transcription of the timing definitions.
RrQuad oracle_rr(const std::vector<std::int64_t>& a, std::size_t k) {
  std::vector<double> pre(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) pre[i] = static_cast<double>(i ? a[i] - a[i - 1] : a[i]);
  RrQuad q;
  q.pre = pre[k];
  q.next = k + 1 < a.size() ? static_cast<double>(a[k + 1] - a[k]) : pre[k];
  const std::size_t lo = k >= 9 ? k - 9 : 0;
  double sum = 0;
  for (std::size_t i = lo; i <= k; ++i) sum += pre[i];
  q.local = sum / static_cast<double>(k - lo + 1);
  if (k == 0) {
    q.global = q.local;
  } else {
    sum = 0;
    for (std::size_t i = 0; i < k; ++i) sum += pre[i];
    q.global = sum / static_cast<double>(k);
  }
  return q;
}

features::BeatWindow random_window(std::mt19937_64& gen) {
  std::normal_distribution<double> d(0.0, 1.0);
  features::BeatWindow w;
  for (auto& v : w.samples) v = d(gen);
  return w;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("RR quadruples on the reference anchor list") {
    const std::vector<std::array<double, 4>> expected = {
        {77, 293, 77, 77},    {293, 293, 185, 77},  {293, 284, 221, 185}, {284, 284, 237, 221},
        {284, 284, 246, 237}, {284, 294, 252, 246}, {294, 236, 258, 252}, {236, 358, 256, 258},
        {358, 303, 267, 256}, {303, 292, 271, 267}, {292, 285, 292, 271}, {285, 277, 291, 273},
        {277, 277, 290, 274}};
    for (std::size_t k = 0; k < kAnchors.size(); ++k) {
      const auto q = features::rr_quadruple(kAnchors, k);
      const auto o = oracle_rr(kAnchors, k);
      CHECK(q.pre == doctest::Approx(o.pre).epsilon(1e-12));
      CHECK(q.next == doctest::Approx(o.next).epsilon(1e-12));
      CHECK(q.local == doctest::Approx(o.local).epsilon(1e-12));
      CHECK(q.global == doctest::Approx(o.global).epsilon(1e-12));
      const auto r = features::rounded(q);
      INFO("anchor " << kAnchors[k]);
      CHECK(r == RrQuad{expected[k][0], expected[k][1], expected[k][2], expected[k][3]});
    }
  }

  TEST_CASE("moving one anchor changes only neighbouring timing") {
    auto moved = kAnchors;
    const std::size_t k = 6;
    moved[k] += 6;
    CHECK(features::rr_quadruple(moved, k).pre == features::rr_quadruple(kAnchors, k).pre + 6);
    CHECK(features::rr_quadruple(moved, k + 1).pre == features::rr_quadruple(kAnchors, k + 1).pre - 6);
    CHECK(features::rr_quadruple(moved, k - 1).next == features::rr_quadruple(kAnchors, k - 1).next + 6);
    for (std::size_t i = 0; i + 1 < k; ++i) {
      CHECK(features::rr_quadruple(moved, i) == features::rr_quadruple(kAnchors, i));
    }
  }

  TEST_CASE("normalisation") {
    const RrQuad q{300, 240, 270, 280};
    const auto n = features::normalize_rr(q, 300.0);
    CHECK(n.pre == doctest::Approx(1.0));
    CHECK(n.next == doctest::Approx(0.8));
    CHECK(n.local == doctest::Approx(0.9));
    CHECK(n.global == doctest::Approx(280.0 / 300.0));
    CHECK_THROWS_AS(features::normalize_rr(q, 0.0), ValidationError);
    CHECK_THROWS_AS(features::normalize_rr(q, -2.0), ValidationError);
    features::RrDivisor d;
    d.by_component = {300, 240, 270, 280};
    const auto m = features::normalize_rr(q, d);
    CHECK(m == RrQuad{1, 1, 1, 1});

    const auto sd = features::segment_divisor(kAnchors);
    double mean = 0;
    for (std::size_t k = 0; k < kAnchors.size(); ++k) mean += features::rr_quadruple(kAnchors, k).pre;
    mean /= static_cast<double>(kAnchors.size());
    for (double v : sd.by_component) CHECK(v == doctest::Approx(mean));
  }

  TEST_CASE("amplitude") {
    const std::vector<double> zero(3600, 0.0);
    CHECK(features::r_amplitude(zero, 77) == 0.0);
    std::vector<double> x(3600, 0.0);
    x[370] = 1.16;
    CHECK(features::r_amplitude(x, 370) == 1.16);
    CHECK_THROWS_AS(features::r_amplitude(x, 3600), ValidationError);
  }

  TEST_CASE("moments of normal draws") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> d(0.0, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> v(10000);
      for (auto& x : v) x = d(gen);
      const auto [skew, kurt] = features::moments(v);
      CHECK(std::abs(skew) < 0.1);
      CHECK(std::abs(kurt - 3.0) < 0.2);
    }
    const std::vector<double> flat(36, 2.5);
    CHECK(features::moments(flat) == std::pair<double, double>{0.0, 0.0});
    const std::vector<double> two = {0, 0, 0, 1};
    const auto [s, k] = features::moments(two);
    // mean 1/4, m2 3/16, m3 3/32, m4 21/256
    CHECK(s == doctest::Approx((3.0 / 32.0) / std::pow(3.0 / 16.0, 1.5)));
    CHECK(k == doctest::Approx((21.0 / 256.0) / std::pow(3.0 / 16.0, 2.0)));
  }

  TEST_CASE("HOS is affine invariant") {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = random_window(gen);
      auto t = w;
      for (auto& v : t.samples) v = 3.7 * v - 1.2;
      const auto a = features::hos_features(w);
      const auto b = features::hos_features(t);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    }
    features::BeatWindow flat;
    for (double v : features::hos_features(flat)) CHECK(v == 0.0);
  }

  TEST_CASE("myMorph is shift and scale invariant") {
    std::mt19937_64 gen(8);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = random_window(gen);
      auto t = w;
      for (auto& v : t.samples) v = 0.4 * v + 5.0;
      const auto a = features::my_morph(w);
      const auto b = features::my_morph(t);
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(a[i] - b[i]) < 1e-9);
        CHECK(a[i] >= 0.0);
        CHECK(a[i] <= std::sqrt(2.0) + 1e-12);
      }
    }
    features::BeatWindow flat;
    const auto m = features::my_morph(flat);
    CHECK(m[0] == doctest::Approx(0.6));
    CHECK(m[1] == doctest::Approx(0.1));
    CHECK(m[2] == doctest::Approx(1.0 / 30.0));
    CHECK(m[3] == doctest::Approx(0.4));
  }

  TEST_CASE("beat window") {
    std::vector<double> x(400);
    std::iota(x.begin(), x.end(), 0.0);
    const auto w = features::beat_window(x, 200, 360);
    CHECK(w.samples[90] == 200.0);
    CHECK(w.samples[0] == 110.0);
    CHECK_FALSE(w.padded_left);
    const auto edge = features::beat_window(x, 10, 360);
    CHECK(edge.padded_left);
    CHECK(edge.samples[0] == 0.0);
    CHECK(edge.samples[90] == 10.0);
  }

  TEST_CASE("vector layout") {
    CHECK(features::kDim == 23);
    features::BeatFeatures f;
    f.rr = {1, 2, 3, 4};
    f.norm_rr = {5, 6, 7, 8};
    f.amp = 9;
    for (std::size_t i = 0; i < 10; ++i) f.hos[i] = 10.0 + static_cast<double>(i);
    for (std::size_t i = 0; i < 4; ++i) f.my_morph[i] = 20.0 + static_cast<double>(i);
    const auto v = features::assemble(f);
    for (std::size_t i = 0; i < features::kDim; ++i) CHECK(v[i] == static_cast<double>(i + 1));
    CHECK(features::split(v) == f);
    const auto m = features::minimal_mask();
    REQUIRE(m.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(m[i] == i);
    CHECK(features::rich_mask().size() == 23);
    CHECK(features::column_names().size() == 23);
  }

  TEST_CASE("CSV round trip is exact") {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> d(0.0, 1e3);
    features::FeatureRow row;
    row.subject = "101";
    row.segment = 4;
    row.anchor = 1809;
    row.label = BeatClass::V;
    for (auto& v : row.values) v = d(gen);
    const auto back = features::parse_csv_row(features::to_csv(row));
    CHECK(back.subject == row.subject);
    CHECK(back.segment == row.segment);
    CHECK(back.anchor == row.anchor);
    CHECK(back.label == row.label);
    CHECK(back.values == row.values);
    row.label.reset();
    CHECK_FALSE(features::parse_csv_row(features::to_csv(row)).label.has_value());
  }

  TEST_CASE("transcript line") {
    features::BeatFeatures f;
    f.rr = {77, 293, 77, 77};
    f.norm_rr = {0.28, 1.0, 0.28, 0.28};
    f.amp = 1.16;
    const auto line = features::format_transcript(77, f);
    CHECK(line.rfind("[77:RR=77,293,77,77;norm_RR=0.2800,1.0000,0.2800,0.2800;amp=1.1600;HOS=[", 0) == 0);
    CHECK(line.find(";myMorph=[0.0000,0.0000,0.0000,0.0000]]") != std::string::npos);
  }

  TEST_CASE("segment extraction") {
    std::vector<double> x(3600, 0.0);
    for (auto a : kAnchors) x[static_cast<std::size_t>(a)] = 1.0;
    const auto d = features::segment_divisor(kAnchors);
    const auto out = features::extract_segment(x, kAnchors, 360, d);
    REQUIRE(out.size() == kAnchors.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      CHECK(out[k].rr == features::rounded(oracle_rr(kAnchors, k)));
      CHECK(out[k].amp == 1.0);
      CHECK(out[k].norm_rr.pre == doctest::Approx(oracle_rr(kAnchors, k).pre / d.by_component[0]));
    }
  }
}
