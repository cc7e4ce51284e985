#include <doctest.h>

#include <set>

#include "beatroute/errors.hpp"
#include "beatroute/ingest/aami.hpp"
#include "beatroute/ingest/record.hpp"
#include "beatroute/ingest/segment.hpp"
#include "beatroute/ingest/split.hpp"
#include "beatroute/ingest/wfdb.hpp"
#include "beatroute/pipeline/synthetic.hpp"
#include "support.hpp"

using namespace beatroute;

TEST_SUITE("ingest") {
  TEST_CASE("AAMI mapping is total") {
    for (char c : std::string("NLRej")) CHECK(map_aami(c) == AamiClass::N);
    for (char c : std::string("AaJS")) CHECK(map_aami(c) == AamiClass::S);
    for (char c : std::string("VE")) CHECK(map_aami(c) == AamiClass::V);
    CHECK(map_aami('F') == AamiClass::F);
    for (char c : std::string("/fQ")) CHECK(map_aami(c) == AamiClass::Q);
    for (char c : std::string("+~|x!\"[]")) CHECK(map_aami(c) == AamiClass::NonBeat);
  }

  TEST_CASE("load_record converts ADC units with header gain and zero") {
    testing::TempDir dir("rec");
    const std::vector<int> raw = {1024, 1000, 1224, 824, 1124, 1024};  // two channels interleaved
    wfdb::write_bytes(dir.path() / "r1.dat", wfdb::encode_fmt212(raw));
    wfdb::Header h;
    h.record_name = "r1";
    h.n_channels = 2;
    h.sampling_rate_hz = 360;
    h.n_samples = 3;
    for (int c = 0; c < 2; ++c) {
      wfdb::ChannelSpec ch;
      ch.filename = "r1.dat";
      ch.gain = 200;
      ch.adc_zero = c == 0 ? 1024 : 1000;
      h.channels.push_back(ch);
    }
    wfdb::write_bytes(dir.path() / "r1.hea",
                      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(wfdb::format_header(h).data()),
                                                    wfdb::format_header(h).size()));
    const std::vector<wfdb::Annotation> ann = {{0, '+'}, {1, 'N'}, {2, 'V'}};
    wfdb::write_bytes(dir.path() / "r1.atr", wfdb::encode_annotations(ann));

    const auto r = load_record(dir.path(), "r1");
    CHECK(r.sampling_rate_hz == 360);
    REQUIRE(r.channels.size() == 2);
    CHECK(r.channels[0] == std::vector<double>{0.0, 1.0, 0.5});
    CHECK(r.channels[1][0] == 0.0);
    CHECK(r.channels[1][1] == doctest::Approx(-0.88));
    CHECK(r.channels[1][2] == doctest::Approx(0.12));
    CHECK(r.annotations == ann);
    CHECK_THROWS_AS(load_record(dir.path(), "missing"), DataError);
  }

  TEST_CASE("beats drop Q and non-beat symbols") {
    auto r = testing::make_record("x", 360, std::vector<double>(4000, 0.0),
                                  {{0, '+'}, {10, 'N'}, {20, '/'}, {30, 'A'}, {40, '~'}, {50, 'E'}, {60, 'f'}, {70, 'F'}});
    const auto b = beats(r);
    REQUIRE(b.size() == 4);
    CHECK(b[0].label == BeatClass::N);
    CHECK(b[1].label == BeatClass::S);
    CHECK(b[2].label == BeatClass::V);
    CHECK(b[3].label == BeatClass::F);
    const auto counts = count_aami(r);
    CHECK(counts[AamiClass::Q] == 2);
    CHECK(counts.total() == 6);
  }

  TEST_CASE("record validation") {
    auto r = testing::make_record("x", 360, std::vector<double>(100, 0.0), {{10, 'N'}, {5, 'N'}});
    CHECK_THROWS_AS(validate(r), DataError);
    r.annotations = {{10, 'N'}, {100, 'N'}};
    CHECK_THROWS_AS(validate(r), DataError);
    r.annotations = {{10, 'N'}, {20, 'N'}};
    r.channels.push_back(std::vector<double>(99, 0.0));
    CHECK_THROWS_AS(validate(r), DataError);
  }

  TEST_CASE("segment length and base grid") {
    CHECK(segment_length(360) == 3600);
    CHECK(segment_length(250) == 2500);
    const auto L = segment_length(360);
    std::vector<wfdb::Annotation> ann;
    for (std::int64_t s = 50; s < 2 * L + 5; s += 300) ann.push_back({s, s % 600 == 50 ? 'N' : 'V'});
    ann.push_back({2 * L + 1, 'N'});
    ann.push_back({100, 'Q'});
    std::sort(ann.begin(), ann.end(), [](auto& a, auto& b) { return a.sample < b.sample; });
    auto r = testing::make_record("g", 360, std::vector<double>(static_cast<std::size_t>(2 * L + 5), 0.0), ann);
    const auto segs = cut_segments(r);
    REQUIRE(segs.size() == 2);
    std::int64_t beats_seen = 0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const auto& s = segs[k];
      CHECK(s.start_sample == static_cast<std::int64_t>(k) * L);
      CHECK(s.length_samples == L);
      CHECK(s.origin == Origin::BaseGrid);
      CHECK(s.anchors.size() == s.labels.size());
      CHECK(std::is_sorted(s.anchors.begin(), s.anchors.end()));
      for (auto a : s.anchors) {
        CHECK(a >= 0);
        CHECK(a < L);
      }
      validate(s);
      beats_seen += static_cast<std::int64_t>(s.anchors.size());
    }
    // every N/S/V/F beat before 2L lands in exactly one segment; the one past 2L does not
    std::int64_t expected = 0;
    for (const auto& b : beats(r)) expected += b.sample < 2 * L;
    CHECK(beats_seen == expected);
  }

  TEST_CASE("segment JSON round trip") {
    Segment s{"100", 3600, 3600, {77, 370}, {BeatClass::N, BeatClass::V}, Origin::Augmented};
    CHECK(segment_from_json(to_json(s)) == s);
    Segment bad = s;
    bad.anchors = {370, 77};
    CHECK_THROWS_AS(validate(bad), DataError);
  }

  TEST_CASE("inter-patient lists") {
    const auto a = mitdb_inter_patient();
    CHECK(a.ds1.size() == 22);
    CHECK(a.ds2.size() == 22);
    CHECK(std::set<std::string>(a.excluded.begin(), a.excluded.end()) == std::set<std::string>{"102", "104", "107", "217"});
    CHECK(mitdb_records().size() == 48);
    std::set<std::string> all(a.ds1.begin(), a.ds1.end());
    all.insert(a.ds2.begin(), a.ds2.end());
    all.insert(a.excluded.begin(), a.excluded.end());
    CHECK(all.size() == 48);
  }

  TEST_CASE("build_split rounds 9:1 and is deterministic") {
    const auto a = mitdb_inter_patient();
    std::vector<std::string> subjects = a.ds1;
    subjects.insert(subjects.end(), a.ds2.begin(), a.ds2.end());
    subjects.insert(subjects.end(), a.excluded.begin(), a.excluded.end());
    const auto m = build_split(subjects, a, 9, 1, 0);
    CHECK(m.d1_subjects.size() == 20);
    CHECK(m.d2_subjects.size() == 2);
    for (const auto& s : m.d2_subjects) CHECK(m.ds2_subjects.count(s) == 0);
    for (const auto& s : m.d1_subjects) CHECK(m.ds2_subjects.count(s) == 0);
    validate(m);
    CHECK(build_split(subjects, a, 9, 1, 0) == m);
    CHECK(split_from_json(to_json(m)) == m);

    auto overlap = a;
    overlap.ds2.push_back(a.ds1.front());
    CHECK_THROWS_AS(build_split(subjects, overlap, 9, 1, 0), ValidationError);
    auto unassigned = a;
    unassigned.excluded.clear();
    CHECK_THROWS_AS(build_split(subjects, unassigned, 9, 1, 0), ValidationError);
  }

  TEST_CASE("synthetic dataset round trip: ingest counts match the manifest") {
    testing::TempDir dir("synth");
    synth::SynthConfig cfg;
    cfg.records = {"a1", "a2", "a3"};
    cfg.seconds = 60;
    cfg.seed = 3;
    const auto manifest = synth::gen_synthetic(cfg, dir.path());
    AamiCounts totals;
    for (const auto& truth : manifest.records) {
      const auto r = load_record(dir.path(), truth.name);
      validate(r);
      const auto c = count_aami(r);
      CHECK(c.by_class == truth.counts.by_class);
      for (std::size_t k = 0; k < 5; ++k) totals.by_class[k] += c.by_class[k];
      std::vector<std::int64_t> want, got;
      for (const auto& b : truth.beats) want.push_back(b.sample);
      for (const auto& a : r.annotations) {
        if (map_aami(a.symbol) != AamiClass::NonBeat) got.push_back(a.sample);
      }
      CHECK(got == want);
    }
    CHECK(totals.by_class == manifest.totals.by_class);
  }
}
