#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "beatroute/errors.hpp"
#include "beatroute/model.hpp"

using namespace beatroute;
using features::FeatureVector;

namespace {

struct Dataset {
  std::vector<FeatureVector> rows;
  std::vector<BeatClass> labels;
};

// Classes differ in the timing columns only, well separated.
Dataset separable(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 0.3);
  Dataset ds;
  const std::array<BeatClass, 3> classes = {BeatClass::N, BeatClass::S, BeatClass::V};
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      FeatureVector v{};
      for (auto& x : v) x = d(gen);
      v[0] += 4.0 * static_cast<double>(c);
      v[1] -= 3.0 * static_cast<double>(c == 1);
      ds.rows.push_back(v);
      ds.labels.push_back(classes[c]);
    }
  }
  return ds;
}

double accuracy(const model::ClassifierParams& p, const Dataset& ds) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) ok += model::predict(p, ds.rows[i]).argmax() == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ds.rows.size());
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("standardisation") {
    const std::vector<std::vector<double>> rows = {{1, 5}, {3, 5}};
    const auto s = model::standardize_fit(rows);
    CHECK(s.mean == std::vector<double>{2, 5});
    CHECK(s.scale[0] == doctest::Approx(1.0));
    CHECK(s.scale[1] == model::kScaleFloor);
    const std::vector<double> row = {3, 5};
    const auto z = model::standardize_apply(s, row);
    CHECK(z[0] == doctest::Approx(1.0));
    CHECK(z[1] == 0.0);
  }

  TEST_CASE("softmax") {
    const auto u = model::softmax({0, 0, 0, 0});
    for (double p : u.probs) CHECK(p == doctest::Approx(0.25));
    std::mt19937_64 gen(1);
    std::normal_distribution<double> d(0.0, 30.0);
    for (int t = 0; t < 100; ++t) {
      std::array<double, kNumClasses> s{};
      for (auto& x : s) x = d(gen);
      const auto p = model::softmax(s);
      double sum = 0;
      for (double q : p.probs) {
        CHECK(std::isfinite(q));
        sum += q;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      auto shifted = s;
      for (auto& x : shifted) x += 123.0;
      const auto q = model::softmax(shifted);
      for (std::size_t c = 0; c < kNumClasses; ++c) CHECK(std::abs(p.probs[c] - q.probs[c]) < 1e-12);
      CHECK(p.confidence() == *std::max_element(p.probs.begin(), p.probs.end()));
    }
    const auto far = model::softmax({1000, 0, -1000, 0});
    CHECK(far.argmax() == BeatClass::N);
    CHECK(far.confidence() == doctest::Approx(1.0));
  }

  TEST_CASE("balanced class weights") {
    std::vector<BeatClass> y(9, BeatClass::N);
    y.push_back(BeatClass::V);
    const auto w = model::balanced_class_weights(y);
    CHECK(w[index_of(BeatClass::N)] == doctest::Approx(10.0 / (2 * 9)));
    CHECK(w[index_of(BeatClass::V)] == doctest::Approx(10.0 / 2));
    CHECK(w[index_of(BeatClass::S)] == 0.0);
  }

  TEST_CASE("separable data is learned") {
    const auto ds = separable(60, 3);
    model::Hyperparameters h;
    h.epochs = 500;
    h.seed = 1;
    const auto p = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    CHECK(accuracy(p, ds) == 1.0);
    for (std::size_t i = 1; i < p.loss_checkpoints.size(); ++i) {
      CHECK(p.loss_checkpoints[i] <= p.loss_checkpoints[i - 1] + 1e-12);
    }
    const auto m = model::train(ds.rows, ds.labels, model::Tier::Minimal, h);
    CHECK(m.feature_mask == features::minimal_mask());
    CHECK(accuracy(m, ds) == 1.0);
    CHECK(m.class_present[index_of(BeatClass::F)] == false);
  }

  TEST_CASE("duplicating every row leaves the balanced fit unchanged") {
    const auto ds = separable(30, 9);
    Dataset twice = ds;
    twice.rows.insert(twice.rows.end(), ds.rows.begin(), ds.rows.end());
    twice.labels.insert(twice.labels.end(), ds.labels.begin(), ds.labels.end());
    model::Hyperparameters h;
    h.epochs = 200;
    h.seed = 4;
    const auto a = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    const auto b = model::train(twice.rows, twice.labels, model::Tier::Rich, h);
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(std::abs(a.weights[i] - b.weights[i]) < 1e-9);
  }

  TEST_CASE("balanced weighting matches a resampled balanced set") {
    // 9:1 imbalance, weighted, against the same data with the minority repeated 9 times.
    std::mt19937_64 gen(21);
    std::normal_distribution<double> d(0.0, 1.0);
    Dataset imb, bal;
    for (int i = 0; i < 180; ++i) {
      FeatureVector v{};
      for (auto& x : v) x = 0.1 * d(gen);
      v[0] = d(gen) - 1.0;
      imb.rows.push_back(v);
      imb.labels.push_back(BeatClass::N);
    }
    for (int i = 0; i < 20; ++i) {
      FeatureVector v{};
      for (auto& x : v) x = 0.1 * d(gen);
      v[0] = d(gen) + 1.0;
      imb.rows.push_back(v);
      imb.labels.push_back(BeatClass::V);
    }
    bal = imb;
    for (int rep = 0; rep < 8; ++rep) {
      for (std::size_t i = 180; i < 200; ++i) {
        bal.rows.push_back(imb.rows[i]);
        bal.labels.push_back(BeatClass::V);
      }
    }
    model::Hyperparameters h;
    h.epochs = 400;
    h.seed = 2;
    const auto a = model::train(imb.rows, imb.labels, model::Tier::Minimal, h);
    const auto b = model::train(bal.rows, bal.labels, model::Tier::Minimal, h);
    // Decision point along the first column, other inputs at their means.
    auto boundary = [](const model::ClassifierParams& p) {
      double lo = -5, hi = 5;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        FeatureVector v{};
        v[0] = mid;
        for (std::size_t k = 1; k < 8; ++k) v[k] = p.standardization.mean[k];
        const auto post = model::predict(p, v);
        (post.probs[index_of(BeatClass::V)] > post.probs[index_of(BeatClass::N)] ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    };
    const double ba = boundary(a), bb = boundary(b);
    CHECK(std::abs(ba) < 0.5);
    CHECK(std::abs(ba - bb) < 0.25);
  }

  TEST_CASE("analytic gradient agrees with finite differences") {
    const auto ds = separable(10, 5);
    model::Hyperparameters h;
    h.epochs = 20;
    h.seed = 3;
    const auto p = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    CHECK(model::grad_check(p, ds.rows, ds.labels) < 1e-4);

    auto obj = model::Objective::balanced(p, ds.rows, ds.labels);
    model::GradientFn wrong = [&](std::span<const double> w) {
      std::vector<double> g;
      obj.evaluate(w, &g);
      g[3] += 0.5;
      return g;
    };
    CHECK(model::grad_check(p, ds.rows, ds.labels, wrong) > 1e-2);
    CHECK(model::grad_check(p, {}, {}) == 0.0);
  }

  TEST_CASE("training is bitwise deterministic") {
    const auto ds = separable(20, 8);
    model::Hyperparameters h;
    h.epochs = 100;
    h.seed = 77;
    const auto a = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    const auto b = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    REQUIRE(a.weights.size() == b.weights.size());
    CHECK(std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(double)) == 0);
    h.seed = 78;
    const auto c = model::train(ds.rows, ds.labels, model::Tier::Rich, h);
    CHECK(c.weights != a.weights);
  }

  TEST_CASE("invalid training input") {
    const auto ds = separable(5, 1);
    CHECK_THROWS_AS(model::train({}, {}, model::Tier::Rich), ValidationError);
    std::vector<BeatClass> one(ds.rows.size(), BeatClass::N);
    CHECK_THROWS_AS(model::train(ds.rows, one, model::Tier::Rich), ValidationError);
    auto bad = ds.rows;
    bad[2][4] = std::nan("");
    CHECK_THROWS_AS(model::train(bad, ds.labels, model::Tier::Rich), ValidationError);
    std::vector<BeatClass> short_labels(ds.labels.begin(), ds.labels.end() - 1);
    CHECK_THROWS_AS(model::train(ds.rows, short_labels, model::Tier::Rich), ValidationError);
  }

  TEST_CASE("tiers and serialisation") {
    CHECK(model::mask_for(model::Tier::Minimal).size() == 8);
    CHECK(model::mask_for(model::Tier::Rich).size() == 23);
    CHECK(model::tier_from_string(model::to_string(model::Tier::Minimal)) == model::Tier::Minimal);
    const auto ds = separable(10, 2);
    model::Hyperparameters h;
    h.epochs = 30;
    const auto p = model::train(ds.rows, ds.labels, model::Tier::Minimal, h);
    const auto q = model::params_from_json(nlohmann::json::parse(model::to_json(p).dump()));
    CHECK(q.weights == p.weights);
    CHECK(q.feature_mask == p.feature_mask);
    CHECK(q.standardization.mean == p.standardization.mean);
    CHECK(q.standardization.scale == p.standardization.scale);
    for (const auto& r : ds.rows) CHECK(model::predict(q, r).probs == model::predict(p, r).probs);
  }
}
