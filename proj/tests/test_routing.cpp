#include <doctest.h>

#include <random>

#include "beatroute/errors.hpp"
#include "beatroute/routing.hpp"

using namespace beatroute;
using model::Posterior;

namespace {

Posterior post(BeatClass c, double conf) {
  Posterior p;
  const double rest = (1.0 - conf) / 3.0;
  for (auto& v : p.probs) v = rest;
  p.probs[index_of(c)] = conf;
  return p;
}

SplitManifest split_with(std::set<std::string> d2, std::set<std::string> ds2 = {"t"}) {
  SplitManifest m;
  m.d2_subjects = std::move(d2);
  m.ds2_subjects = std::move(ds2);
  m.ds1_subjects = m.d2_subjects;
  return m;
}

// Exhaustive check of every tau candidate.
std::int64_t brute_correct(const std::vector<routing::SweepSegment>& segs, double tau) {
  std::int64_t ok = 0;
  for (const auto& s : segs) {
    const bool keep = routing::segment_confidence(s.minimal).aggregate >= tau;
    for (std::size_t i = 0; i < s.truth.size(); ++i) {
      ok += (keep ? s.minimal[i].argmax() : s.rich[i]) == s.truth[i];
    }
  }
  return ok;
}

}  // namespace

TEST_SUITE("routing") {
  TEST_CASE("segment confidence") {
    const std::vector<Posterior> p = {post(BeatClass::N, 0.9), post(BeatClass::V, 0.6), post(BeatClass::N, 0.75)};
    const auto mean = routing::segment_confidence(p, routing::AggregateMode::Mean);
    CHECK(mean.aggregate == doctest::Approx(0.75));
    CHECK(mean.beat_confidences.size() == 3);
    CHECK(routing::segment_confidence(p, routing::AggregateMode::Min).aggregate == doctest::Approx(0.6));
    CHECK_THROWS_AS(routing::segment_confidence({}), ValidationError);
    CHECK(routing::beat_confidence(post(BeatClass::S, 0.4)) == doctest::Approx(0.4));

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.25, 1.0);
    for (int t = 0; t < 100; ++t) {
      std::vector<Posterior> ps;
      for (int i = 0; i < 1 + t % 9; ++i) ps.push_back(post(BeatClass::N, u(gen)));
      const double a = routing::segment_confidence(ps).aggregate;
      const double b = routing::segment_confidence(ps, routing::AggregateMode::Min).aggregate;
      CHECK(a >= b);
      CHECK(b >= 0.25);
      CHECK(a <= 1.0);
    }
  }

  TEST_CASE("sweep sends everything to Rich when Rich is always right") {
    std::vector<routing::SweepSegment> segs;
    for (int i = 0; i < 5; ++i) {
      segs.push_back({"a", {post(BeatClass::N, 0.5 + 0.1 * i)}, {BeatClass::V}, {BeatClass::V}});
    }
    const auto r = routing::sweep_threshold(segs, split_with({"a"}));
    CHECK(r.tau == routing::kAboveOne);
    CHECK(r.rich_segments == 5);
    CHECK(r.micro_f1 == 1.0);
  }

  TEST_CASE("identical branches never route to Rich") {
    std::vector<routing::SweepSegment> segs;
    for (int i = 0; i < 5; ++i) {
      segs.push_back({"a", {post(BeatClass::N, 0.5 + 0.1 * i)}, {BeatClass::N}, {BeatClass::N}});
    }
    const auto r = routing::sweep_threshold(segs, split_with({"a"}));
    CHECK(r.rich_segments == 0);
    CHECK(r.micro_f1 == 1.0);
  }

  TEST_CASE("sweep agrees with brute force") {
    // Confidences 0.6, 0.7, 0.8: only the least confident segment benefits from Rich.
    const std::vector<routing::SweepSegment> segs = {
        {"a", {post(BeatClass::N, 0.6), post(BeatClass::N, 0.6)}, {BeatClass::V, BeatClass::V}, {BeatClass::V, BeatClass::V}},
        {"a", {post(BeatClass::N, 0.7)}, {BeatClass::S}, {BeatClass::N}},
        {"b", {post(BeatClass::S, 0.8)}, {BeatClass::S}, {BeatClass::S}},
    };
    const auto r = routing::sweep_threshold(segs, split_with({"a", "b"}));
    CHECK(r.tau == doctest::Approx(0.7));
    CHECK(r.rich_segments == 1);
    CHECK(r.micro_f1 == doctest::Approx(1.0));
    CHECK(r.induced_on == std::vector<std::string>{"a", "b"});
    std::int64_t best = 0;
    for (double tau : {0.0, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9, routing::kAboveOne}) best = std::max(best, brute_correct(segs, tau));
    CHECK(best == brute_correct(segs, r.tau));

    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    std::uniform_int_distribution<int> cls(0, 3);
    for (int t = 0; t < 30; ++t) {
      std::vector<routing::SweepSegment> rnd;
      for (int s = 0; s < 8; ++s) {
        routing::SweepSegment seg{"a", {}, {}, {}};
        for (int b = 0; b < 3; ++b) {
          seg.minimal.push_back(post(kAllClasses[static_cast<std::size_t>(cls(gen))], u(gen)));
          seg.rich.push_back(kAllClasses[static_cast<std::size_t>(cls(gen))]);
          seg.truth.push_back(kAllClasses[static_cast<std::size_t>(cls(gen))]);
        }
        rnd.push_back(seg);
      }
      const auto rr = routing::sweep_threshold(rnd, split_with({"a"}));
      std::int64_t top = 0;
      for (const auto& c : rr.candidates) top = std::max(top, brute_correct(rnd, c.tau));
      CHECK(brute_correct(rnd, rr.tau) == top);
    }
  }

  TEST_CASE("sweep refuses leaked or foreign subjects") {
    const std::vector<routing::SweepSegment> test_leak = {{"t", {post(BeatClass::N, 0.9)}, {BeatClass::N}, {BeatClass::N}}};
    CHECK_THROWS_AS(routing::sweep_threshold(test_leak, split_with({"a"})), ValidationError);
    const std::vector<routing::SweepSegment> foreign = {{"z", {post(BeatClass::N, 0.9)}, {BeatClass::N}, {BeatClass::N}}};
    CHECK_THROWS_AS(routing::sweep_threshold(foreign, split_with({"a"})), ValidationError);
    CHECK_THROWS_AS(routing::sweep_threshold({}, split_with({"a"})), ValidationError);
  }

  TEST_CASE("gate on a confidence just below threshold") {
    const std::vector<Posterior> p = {post(BeatClass::N, 0.989392)};
    int calls = 0;
    auto rich = [&] {
      ++calls;
      return std::vector<BeatClass>{BeatClass::S};
    };
    const auto r = routing::route("100_0", p, 0.990529, rich);
    CHECK(r.branch == routing::Branch::RichAcquired);
    CHECK(r.tool_calls == 4);
    CHECK(r.labels == std::vector<BeatClass>{BeatClass::S});
    CHECK(calls == 1);

    const auto keep = routing::route("100_0", p, 0.0, rich);
    CHECK(keep.branch == routing::Branch::MinimalOnly);
    CHECK(keep.tool_calls == 2);
    CHECK(keep.labels == std::vector<BeatClass>{BeatClass::N});
    CHECK(calls == 1);

    const auto all = routing::route("100_0", p, routing::kAboveOne, rich);
    CHECK(all.branch == routing::Branch::RichAcquired);
    CHECK(calls == 2);

    auto wrong = [] { return std::vector<BeatClass>{}; };
    CHECK_THROWS_AS(routing::route("x", p, 1.5, wrong), ValidationError);
  }

  TEST_CASE("routing report") {
    const std::vector<Posterior> hi = {post(BeatClass::N, 0.99)};
    const std::vector<Posterior> lo = {post(BeatClass::N, 0.4)};
    auto rich = [] { return std::vector<BeatClass>{BeatClass::V}; };
    std::vector<routing::RoutedPrediction> r = {routing::route("a", hi, 0.5, rich), routing::route("b", lo, 0.5, rich)};
    const std::vector<std::vector<BeatClass>> truth = {{BeatClass::N}, {BeatClass::N}};
    const auto rep = routing::routing_report(r, truth);
    CHECK(rep.segments == 2);
    CHECK(rep.average_tool_calls == doctest::Approx(3.0));
    CHECK(rep.rich_fraction == doctest::Approx(0.5));
    CHECK(*rep.minimal_branch_micro_f1 == 1.0);
    CHECK(*rep.rich_branch_micro_f1 == 0.0);

    std::vector<routing::RoutedPrediction> only_min = {r[0], r[0]};
    CHECK(routing::routing_report(only_min).average_tool_calls == 2.0);
    CHECK_FALSE(routing::routing_report(only_min).rich_branch_micro_f1.has_value());
    std::vector<routing::RoutedPrediction> only_rich = {r[1]};
    CHECK(routing::routing_report(only_rich).average_tool_calls == 4.0);
  }
}
