#include "beatroute/pipeline/stages.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "beatroute/augment.hpp"
#include "beatroute/errors.hpp"
#include "beatroute/evalx.hpp"
#include "beatroute/hashing.hpp"
#include "beatroute/ingest/fetch.hpp"
#include "beatroute/ingest/split.hpp"
#include "beatroute/model.hpp"
#include "beatroute/peaks.hpp"
#include "beatroute/pipeline/artifacts.hpp"
#include "beatroute/rng.hpp"
#include "beatroute/routing.hpp"

namespace beatroute::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTables[] = {"train", "ds1", "d2", "ds2"};

std::string stage_key(Stage s) { return "stage:" + to_string(s); }

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

Record load(const Context& ctx, const std::string& name) {
  Record r = load_record(ctx.config.data_dir, name, ctx.config.annotator);
  validate(r);
  if (static_cast<std::size_t>(ctx.config.channel) >= r.channels.size()) {
    throw DataError("record " + name + " has no channel " + std::to_string(ctx.config.channel));
  }
  return r;
}

std::string segments_jsonl(std::span<const Segment> segs) {
  std::string out;
  for (const auto& s : segs) out += to_json(s).dump() + "\n";
  return out;
}

std::vector<Segment> read_segments(const fs::path& path) {
  std::vector<Segment> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(segment_from_json(json::parse(line)));
  }
  return out;
}

std::map<std::string, std::vector<Segment>> by_record(std::vector<Segment> segs) {
  std::map<std::string, std::vector<Segment>> out;
  for (auto& s : segs) out[s.record_ref].push_back(std::move(s));
  return out;
}

json counts_json(const AamiCounts& c) {
  return {{"N", c.by_class[0]}, {"S", c.by_class[1]}, {"V", c.by_class[2]},
          {"F", c.by_class[3]}, {"Q", c.by_class[4]}, {"total", c.total()}};
}

SplitManifest load_split(const Context& ctx) {
  return split_from_json(json::parse(read_text(ctx.config.output_dir / "ingest" / "split.json")));
}

std::string routing_settings(const RunConfig& c) {
  return "mode=" + routing::to_string(c.mode) + ";tau=" + (c.tau ? fmt(*c.tau, "%.17g") : std::string("swept"));
}

// Beats of every AAMI class, Q included, for detector scoring.
struct AnnotatedBeats {
  std::vector<std::int64_t> samples;
  std::vector<std::optional<BeatClass>> labels;  // nullopt for Q
};

AnnotatedBeats annotated_beats(const Record& r) {
  AnnotatedBeats a;
  for (const auto& ann : r.annotations) {
    const auto cls = map_aami(ann.symbol);
    if (cls == AamiClass::NonBeat) continue;
    if (!a.samples.empty() && a.samples.back() == ann.sample) continue;
    a.samples.push_back(ann.sample);
    a.labels.push_back(to_beat_class(cls));
  }
  return a;
}

features::RrDivisor divisor_for(const RunConfig& c, const features::RrDivisor& record_div,
                                std::span<const std::int64_t> anchors) {
  return c.divisor == features::DivisorMode::RecordMean ? record_div : features::segment_divisor(anchors);
}

// Detected-anchor view of a base segment.
struct DetectedSegment {
  Segment seg;                                  // anchors = detections, labels unused
  std::vector<std::optional<BeatClass>> label;  // per anchor; nullopt = unmatched
  std::vector<bool> keep;                       // false when matched to a Q beat
  std::vector<std::pair<std::int64_t, BeatClass>> missed;
};

DetectedSegment detected_view(const Segment& base, std::span<const std::int64_t> peaks, const AnnotatedBeats& ann,
                              int fs, double tolerance_ms) {
  DetectedSegment d;
  d.seg = base;
  d.seg.anchors.clear();
  d.seg.labels.clear();
  const auto lo = base.start_sample, hi = base.start_sample + base.length_samples;
  std::vector<std::int64_t> det, truth;
  std::vector<std::optional<BeatClass>> truth_label;
  for (auto p : peaks) {
    if (p >= lo && p < hi) det.push_back(p);
  }
  for (std::size_t i = 0; i < ann.samples.size(); ++i) {
    if (ann.samples[i] >= lo && ann.samples[i] < hi) {
      truth.push_back(ann.samples[i]);
      truth_label.push_back(ann.labels[i]);
    }
  }
  const auto m = peaks::match_peaks(det, truth, fs, tolerance_ms);
  std::vector<std::optional<std::size_t>> match(det.size());
  std::vector<bool> hit(truth.size(), false);
  for (auto [di, ai] : m.pairs) {
    match[di] = ai;
    hit[ai] = true;
  }
  for (std::size_t i = 0; i < det.size(); ++i) {
    d.seg.anchors.push_back(det[i] - lo);
    if (match[i]) {
      d.label.push_back(truth_label[*match[i]]);
      d.keep.push_back(truth_label[*match[i]].has_value());
    } else {
      d.label.push_back(std::nullopt);
      d.keep.push_back(true);
    }
  }
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (!hit[j] && truth_label[j]) d.missed.emplace_back(truth[j] - lo, *truth_label[j]);
  }
  return d;
}

std::map<std::string, peaks::PeakSet> load_peaks(const Context& ctx) {
  const auto j = json::parse(read_text(ctx.config.output_dir / "detect" / "peaks.json"));
  std::map<std::string, peaks::PeakSet> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<peaks::PeakSet>();
  return out;
}

struct Table {
  std::vector<features::FeatureRow> rows;
};

Table read_table(const fs::path& path) {
  Table t;
  std::istringstream in(read_text(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (!line.empty()) t.rows.push_back(features::parse_csv_row(line));
  }
  return t;
}

// Consecutive rows sharing (subject, segment).
std::vector<std::pair<std::size_t, std::size_t>> group_rows(const Table& t) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < t.rows.size()) {
    std::size_t j = i + 1;
    while (j < t.rows.size() && t.rows[j].subject == t.rows[i].subject && t.rows[j].segment == t.rows[i].segment) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

model::ClassifierParams load_model(const Context& ctx, const std::string& name) {
  return model::params_from_json(json::parse(read_text(ctx.config.output_dir / "train" / (name + ".json"))));
}

double resolve_tau(const Context& ctx) {
  if (ctx.config.tau) return *ctx.config.tau;
  const auto j = json::parse(read_text(ctx.config.output_dir / "sweep" / "threshold.json"));
  if (j.at("mode").get<std::string>() != routing::to_string(ctx.config.mode)) {
    throw DataError("sweep was induced with mode '" + j.at("mode").get<std::string>() + "'; rerun `beatroute sweep`");
  }
  return j.at("tau").get<double>();
}

std::vector<BeatClass> argmax_labels(const model::ClassifierParams& p, std::span<const features::FeatureVector> rows) {
  std::vector<BeatClass> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(model::predict(p, r).argmax());
  return out;
}

std::string metrics_csv_row(const std::string& name, const evalx::ClassMetrics& m) {
  std::string line = name + "," + fmt(m.micro_f1) + "," + fmt(m.macro_f1);
  for (auto c : kAllClasses) line += "," + fmt(m.f1[index_of(c)]);
  return line + "," + std::to_string(m.n) + "\n";
}

// ---------------------------------------------------------------- stages

void stage_fetch(const Context& ctx) {
  FetchOptions o;
  o.base_url = ctx.config.base_url;
  o.records = ctx.config.all_records();
  o.destination = ctx.config.data_dir;
  o.offline = ctx.config.offline;
  const auto report = fetch_dataset(o);
  int failures = 0;
  for (const auto& f : report.files) {
    if (f.status == FetchStatus::CacheHit || f.status == FetchStatus::Downloaded) continue;
    ctx.log(f.filename + ": " + to_string(f.status) + (f.detail.empty() ? "" : " (" + f.detail + ")"));
    ++failures;
  }
  ctx.log("fetch: " + std::to_string(report.files.size()) + " files, " + std::to_string(report.network_requests) +
          " requests, " + std::to_string(failures) + " failures");
  if (!report.ok()) throw DataError("fetch incomplete; see messages above");
}

void stage_ingest(const Context& ctx) {
  const auto& c = ctx.config;
  const auto names = c.all_records();
  std::vector<std::string> missing;
  for (const auto& n : names) {
    for (const auto& ext : {std::string("hea"), c.annotator}) {
      if (!fs::exists(c.data_dir / (n + "." + ext))) missing.push_back(n + "." + ext);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing input files in " + c.data_dir.string() + " (run `beatroute fetch` first):";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  StageWriter w(c.output_dir, "ingest", ctx.hash);
  std::set<std::string> files;
  for (const auto& n : names) {
    files.insert(n + ".hea");
    files.insert(n + "." + c.annotator);
    const auto h = wfdb::parse_header(read_text(c.data_dir / (n + ".hea")));
    for (const auto& ch : h.channels) files.insert(ch.filename);
  }
  for (const auto& f : files) w.input("data:" + f, sha256_file(c.data_dir / f));

  const std::set<std::string> analysed = [&] {
    std::set<std::string> s(c.split.ds1.begin(), c.split.ds1.end());
    s.insert(c.split.ds2.begin(), c.split.ds2.end());
    return s;
  }();
  std::vector<AamiCounts> counts(names.size());
  std::vector<std::vector<Segment>> segs(names.size());
  parallel_for(names.size(), ctx.jobs, [&](std::size_t i) {
    const Record r = load(ctx, names[i]);
    counts[i] = count_aami(r);
    if (analysed.count(names[i])) segs[i] = cut_segments(r, c.segment_seconds);
  });

  json per_record = json::object();
  AamiCounts totals;
  std::vector<Segment> all;
  for (std::size_t i = 0; i < names.size(); ++i) {
    per_record[names[i]] = counts_json(counts[i]);
    for (std::size_t k = 0; k < 5; ++k) totals.by_class[k] += counts[i].by_class[k];
    all.insert(all.end(), segs[i].begin(), segs[i].end());
  }
  w.write_json("counts.json", {{"records", per_record}, {"totals", counts_json(totals)}, {"n_records", names.size()}});

  std::vector<std::string> subjects(analysed.begin(), analysed.end());
  SplitAssignment assignment{c.split.ds1, c.split.ds2, c.split.excluded};
  const auto split = build_split(subjects, assignment, c.d1_parts, c.d2_parts, *c.seed);
  validate(split);
  w.write_json("split.json", to_json(split));
  w.write("segments.jsonl", segments_jsonl(all));
  w.commit();
  ctx.log("ingest: " + std::to_string(names.size()) + " records, " + std::to_string(totals.total()) + " beats, " +
          std::to_string(all.size()) + " segments");
}

void stage_augment(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ingest = require_stage(c.output_dir, "ingest", ctx.hash);
  const auto split = load_split(ctx);
  auto base = by_record(read_segments(c.output_dir / "ingest" / "segments.jsonl"));
  const std::vector<std::string> d1(split.d1_subjects.begin(), split.d1_subjects.end());

  std::vector<std::vector<augment::BeatRef>> refs(d1.size());
  parallel_for(d1.size(), ctx.jobs, [&](std::size_t i) {
    const auto bs = beats(load(ctx, d1[i]));
    for (std::size_t k = 0; k < bs.size(); ++k) refs[i].push_back({d1[i], k, bs[k].sample, bs[k].label});
  });
  std::vector<augment::BeatRef> all_refs;
  for (auto& r : refs) all_refs.insert(all_refs.end(), r.begin(), r.end());
  const auto plan = augment::plan_augmentation(all_refs, c.targets, c.ladder);

  std::map<std::string, std::vector<std::size_t>> todo;
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) todo[plan.assignments[i].record].push_back(i);
  std::vector<std::optional<Segment>> made(plan.assignments.size());
  std::vector<std::string> with_work;
  for (const auto& [rec, _] : todo) with_work.push_back(rec);
  parallel_for(with_work.size(), ctx.jobs, [&](std::size_t i) {
    const Record r = load(ctx, with_work[i]);
    const auto bs = beats(r);
    const auto length = segment_length(r.sampling_rate_hz, c.segment_seconds);
    for (auto idx : todo.at(with_work[i])) {
      const auto& a = plan.assignments[idx];
      made[idx] = augment::reanchor(r, bs, a.sample, a.fraction, length);
    }
  });

  std::vector<Segment> pool;
  for (const auto& s : d1) {
    auto it = base.find(s);
    if (it != base.end()) pool.insert(pool.end(), it->second.begin(), it->second.end());
  }
  std::size_t augmented = 0;
  for (auto& m : made) {
    if (m) {
      pool.push_back(std::move(*m));
      ++augmented;
    }
  }
  pool = augment::dedup(std::move(pool));

  std::array<std::int64_t, kNumClasses> after{};
  for (const auto& s : pool) {
    for (auto l : s.labels) ++after[index_of(l)];
  }
  json summary = augment::to_json(plan);
  summary["segments_after_dedup"] = pool.size();
  summary["beats_after"] = {{"N", after[0]}, {"S", after[1]}, {"V", after[2]}, {"F", after[3]}};

  StageWriter w(c.output_dir, "augment", ctx.hash);
  w.input(stage_key(Stage::Ingest), ingest.artifact_hash);
  w.write_json("plan.json", summary);
  w.write("segments.jsonl", segments_jsonl(pool));
  w.commit();
  ctx.log("augment: " + std::to_string(augmented) + " re-anchored windows, " + std::to_string(pool.size()) +
          " training segments");
}

void stage_detect(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ingest = require_stage(c.output_dir, "ingest", ctx.hash);
  const auto names = c.all_records();
  std::vector<peaks::PeakSet> found(names.size());
  std::vector<peaks::MatchReport> reports(names.size());
  parallel_for(names.size(), ctx.jobs, [&](std::size_t i) {
    const Record r = load(ctx, names[i]);
    found[i] = peaks::detect_rpeaks(r.channels[static_cast<std::size_t>(c.channel)], r.sampling_rate_hz, c.detector);
    reports[i] = peaks::match_peaks(found[i], annotated_beats(r).samples, r.sampling_rate_hz, c.tolerance_ms);
  });
  json peaks_j = json::object(), per = json::object();
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    peaks_j[names[i]] = found[i];
    const auto& m = reports[i];
    per[names[i]] = {{"tp", m.true_positives}, {"fp", m.false_positives}, {"fn", m.false_negatives}, {"f1", m.f1}};
    tp += m.true_positives;
    fp += m.false_positives;
    fn += m.false_negatives;
  }
  const double f1 = tp + fp + fn == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  StageWriter w(c.output_dir, "detect", ctx.hash);
  w.input(stage_key(Stage::Ingest), ingest.artifact_hash);
  w.write_json("peaks.json", peaks_j);
  w.write_json("report.json", {{"tolerance_ms", c.tolerance_ms},
                               {"records", per},
                               {"total", {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"f1", f1}}}});
  w.commit();
  ctx.log("detect: F1 " + fmt(f1, "%.4f") + " over " + std::to_string(names.size()) + " records");
}

void stage_features(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ingest = require_stage(c.output_dir, "ingest", ctx.hash);
  const auto aug = require_stage(c.output_dir, "augment", ctx.hash);
  std::optional<StageMeta> detect;
  std::map<std::string, peaks::PeakSet> detected;
  if (c.anchors == AnchorSource::Detected) {
    detect = require_stage(c.output_dir, "detect", ctx.hash);
    detected = load_peaks(ctx);
  }
  const auto split = load_split(ctx);
  const auto base = by_record(read_segments(c.output_dir / "ingest" / "segments.jsonl"));
  const auto train = by_record(read_segments(c.output_dir / "augment" / "segments.jsonl"));

  std::vector<std::string> names;
  for (const auto& [n, _] : base) names.push_back(n);
  // table index -> per record csv text
  std::vector<std::array<std::string, 4>> text(names.size());
  std::vector<std::string> missed_text(names.size());

  parallel_for(names.size(), ctx.jobs, [&](std::size_t i) {
    const auto& name = names[i];
    const Record r = load(ctx, name);
    const auto& base_segs = base.at(name);
    const auto annotated_div = features::record_divisor(base_segs);

    auto emit = [&](std::string& out, const Segment& seg, std::span<const std::int64_t> anchors,
                    const std::vector<std::optional<BeatClass>>& labels, const std::vector<bool>* keep,
                    const features::RrDivisor& rdiv) {
      const auto f = segment_features(r, c.channel, seg, anchors, divisor_for(c, rdiv, anchors));
      for (std::size_t k = 0; k < f.size(); ++k) {
        if (keep && !(*keep)[k]) continue;
        features::FeatureRow row{name, seg.start_sample, anchors[k], labels[k], features::assemble(f[k])};
        out += features::to_csv(row) + "\n";
      }
    };
    auto labelled = [](const Segment& s) {
      return std::vector<std::optional<BeatClass>>(s.labels.begin(), s.labels.end());
    };

    if (auto it = train.find(name); it != train.end()) {
      for (const auto& s : it->second) emit(text[i][0], s, s.anchors, labelled(s), nullptr, annotated_div);
    }
    const bool in_ds1 = split.ds1_subjects.count(name) > 0;
    const bool in_d2 = split.d2_subjects.count(name) > 0;
    const bool in_ds2 = split.ds2_subjects.count(name) > 0;
    if (in_ds1) {
      for (const auto& s : base_segs) emit(text[i][1], s, s.anchors, labelled(s), nullptr, annotated_div);
    }
    if (!in_d2 && !in_ds2) return;
    auto& out = text[i][in_d2 ? 2 : 3];
    if (c.anchors == AnchorSource::Annotated) {
      for (const auto& s : base_segs) emit(out, s, s.anchors, labelled(s), nullptr, annotated_div);
      return;
    }
    const auto it = detected.find(name);
    if (it == detected.end()) throw DataError("detect artifacts lack record " + name + "; rerun `beatroute detect`");
    const auto ann = annotated_beats(r);
    std::vector<DetectedSegment> views;
    std::vector<Segment> det_segs;
    for (const auto& s : base_segs) {
      views.push_back(detected_view(s, it->second, ann, r.sampling_rate_hz, c.tolerance_ms));
      det_segs.push_back(views.back().seg);
    }
    const auto det_div = features::record_divisor(det_segs);
    for (const auto& v : views) {
      emit(out, v.seg, v.seg.anchors, v.label, &v.keep, det_div);
      if (in_ds2) {
        for (const auto& [sample, label] : v.missed) {
          missed_text[i] += name + "," + std::to_string(v.seg.start_sample) + "," + std::to_string(sample) + "," +
                            std::string(1, to_char(label)) + "\n";
        }
      }
    }
  });

  StageWriter w(c.output_dir, "features", ctx.hash);
  w.input(stage_key(Stage::Ingest), ingest.artifact_hash);
  w.input(stage_key(Stage::Augment), aug.artifact_hash);
  if (detect) w.input(stage_key(Stage::Detect), detect->artifact_hash);
  std::array<std::size_t, 4> rows{};
  for (std::size_t t = 0; t < 4; ++t) {
    std::string body = features::csv_header() + "\n";
    for (const auto& per : text) {
      body += per[t];
      rows[t] += static_cast<std::size_t>(std::count(per[t].begin(), per[t].end(), '\n'));
    }
    w.write(std::string(kTables[t]) + ".csv", body);
  }
  std::string missed = "subject,segment,sample,label\n";
  for (const auto& m : missed_text) missed += m;
  w.write("ds2_missed.csv", missed);
  w.commit();
  ctx.log("features: train " + std::to_string(rows[0]) + ", ds1 " + std::to_string(rows[1]) + ", d2 " +
          std::to_string(rows[2]) + ", ds2 " + std::to_string(rows[3]) + " rows");
}

void stage_train(const Context& ctx) {
  const auto& c = ctx.config;
  const auto feats = require_stage(c.output_dir, "features", ctx.hash);
  struct Job {
    std::string name;
    std::string table;
    model::Tier tier;
    model::Hyperparameters hyper;
  };
  const std::vector<Job> jobs = {{"minimal", "train", model::Tier::Minimal, c.minimal},
                                 {"rich", "train", model::Tier::Rich, c.rich},
                                 {"oracle", "ds1", model::Tier::Rich, c.rich}};
  std::map<std::string, std::pair<std::vector<features::FeatureVector>, std::vector<BeatClass>>> data;
  for (const auto* t : {"train", "ds1"}) {
    auto& [x, y] = data[t];
    for (const auto& row : read_table(c.output_dir / "features" / (std::string(t) + ".csv")).rows) {
      if (!row.label) continue;
      x.push_back(row.values);
      y.push_back(*row.label);
    }
  }
  std::vector<model::ClassifierParams> fitted(jobs.size());
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const auto& [x, y] = data.at(jobs[i].table);
    fitted[i] = model::train(x, y, jobs[i].tier, jobs[i].hyper);
  });
  StageWriter w(c.output_dir, "train", ctx.hash);
  w.input(stage_key(Stage::Features), feats.artifact_hash);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    w.write(jobs[i].name + ".json", model::to_json(fitted[i]).dump() + "\n");
    ctx.log("train: " + jobs[i].name + " on " + std::to_string(data.at(jobs[i].table).first.size()) +
            " beats, final loss " + fmt(fitted[i].loss_checkpoints.back(), "%.6g"));
  }
  w.commit();
}

void stage_sweep(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ingest = require_stage(c.output_dir, "ingest", ctx.hash);
  const auto feats = require_stage(c.output_dir, "features", ctx.hash);
  const auto trained = require_stage(c.output_dir, "train", ctx.hash);
  const auto split = load_split(ctx);
  const auto minimal = load_model(ctx, "minimal");
  const auto rich = load_model(ctx, "rich");
  const auto table = read_table(c.output_dir / "features" / "d2.csv");

  std::vector<routing::SweepSegment> segs;
  for (auto [a, b] : group_rows(table)) {
    routing::SweepSegment s;
    s.subject = table.rows[a].subject;
    for (auto i = a; i < b; ++i) {
      const auto& row = table.rows[i];
      if (!row.label) continue;
      s.minimal.push_back(model::predict(minimal, row.values));
      s.rich.push_back(model::predict(rich, row.values).argmax());
      s.truth.push_back(*row.label);
    }
    if (!s.truth.empty()) segs.push_back(std::move(s));
  }
  if (segs.empty()) throw DataError("no labelled d2 beats to induce the routing threshold");
  const auto result = routing::sweep_threshold(segs, split, c.mode);

  StageWriter w(c.output_dir, "sweep", ctx.hash);
  w.input(stage_key(Stage::Ingest), ingest.artifact_hash);
  w.input(stage_key(Stage::Features), feats.artifact_hash);
  w.input(stage_key(Stage::Train), trained.artifact_hash);
  w.input("routing:mode", routing::to_string(c.mode));
  w.write_json("threshold.json", routing::threshold_artifact(c.dataset, result));
  w.commit();
  ctx.log("sweep: tau " + fmt(result.tau, "%.6f") + " (" + routing::to_string(c.mode) + "), d2 Micro-F1 " +
          fmt(result.micro_f1, "%.4f") + " over " + std::to_string(segs.size()) + " segments");
}

void stage_evaluate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto feats = require_stage(c.output_dir, "features", ctx.hash);
  const auto trained = require_stage(c.output_dir, "train", ctx.hash);
  std::optional<StageMeta> sweep;
  if (!c.tau) sweep = require_stage(c.output_dir, "sweep", ctx.hash);
  const double tau = resolve_tau(ctx);
  const auto minimal = load_model(ctx, "minimal");
  const auto rich = load_model(ctx, "rich");
  const auto oracle = load_model(ctx, "oracle");
  const auto table = read_table(c.output_dir / "features" / "ds2.csv");

  std::vector<BeatClass> truth, p_routed, p_min, p_rich, p_oracle;
  std::array<std::vector<BeatClass>, 4> unmatched;  // routed, minimal, rich, oracle
  std::vector<routing::RoutedPrediction> routed;
  std::vector<std::vector<BeatClass>> routed_truths;
  std::vector<evalx::ProfileSegment> profile;
  bool all_labelled = true;
  std::int64_t rich_calls = 0;
  std::string dump;

  for (auto [a, b] : group_rows(table)) {
    std::vector<features::FeatureVector> rows;
    std::vector<model::Posterior> post;
    for (auto i = a; i < b; ++i) {
      rows.push_back(table.rows[i].values);
      post.push_back(model::predict(minimal, rows.back()));
    }
    const auto id = table.rows[a].subject + ":" + std::to_string(table.rows[a].segment);
    const auto rp = routing::route(
        id, post, tau,
        [&] {
          ++rich_calls;
          return argmax_labels(rich, rows);
        },
        c.mode);
    const auto rich_labels = argmax_labels(rich, rows);
    const auto oracle_labels = argmax_labels(oracle, rows);

    evalx::ProfileSegment ps;
    ps.confidence = rp.confidence.aggregate;
    std::vector<BeatClass> seg_truth;
    for (auto i = a; i < b; ++i) {
      const auto k = i - a;
      const auto m = post[k].argmax();
      if (const auto& l = table.rows[i].label) {
        truth.push_back(*l);
        p_routed.push_back(rp.labels[k]);
        p_min.push_back(m);
        p_rich.push_back(rich_labels[k]);
        p_oracle.push_back(oracle_labels[k]);
        seg_truth.push_back(*l);
        ps.minimal.push_back(m);
        ps.rich.push_back(rich_labels[k]);
        ps.truth.push_back(*l);
      } else {
        all_labelled = false;
        unmatched[0].push_back(rp.labels[k]);
        unmatched[1].push_back(m);
        unmatched[2].push_back(rich_labels[k]);
        unmatched[3].push_back(oracle_labels[k]);
      }
    }
    if (!ps.truth.empty()) profile.push_back(std::move(ps));
    dump += routing::to_json(rp).dump() + "\n";
    routed_truths.push_back(std::move(seg_truth));
    routed.push_back(rp);
  }
  if (routed.empty()) throw DataError("ds2 feature table is empty");

  std::vector<BeatClass> missed;
  {
    std::istringstream in(read_text(c.output_dir / "features" / "ds2_missed.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty()) missed.push_back(*class_from_char(line.back()));
    }
  }

  const std::array<std::string, 4> names = {"routed", "minimal", "rich", "oracle"};
  const std::array<const std::vector<BeatClass>*, 4> preds = {&p_routed, &p_min, &p_rich, &p_oracle};
  std::array<evalx::ClassMetrics, 4> metrics;
  for (std::size_t i = 0; i < 4; ++i) metrics[i] = evalx::compute_metrics(*preds[i], truth, unmatched[i], missed);

  const auto rr = routing::routing_report(routed, all_labelled ? std::span(routed_truths)
                                                               : std::span<const std::vector<BeatClass>>());
  json routing_j = {{"segments", rr.segments},
                    {"average_tool_calls", rr.average_tool_calls},
                    {"rich_fraction", rr.rich_fraction},
                    {"rich_invocations", rich_calls}};
  if (rr.minimal_branch_micro_f1) routing_j["minimal_branch_micro_f1"] = *rr.minimal_branch_micro_f1;
  if (rr.rich_branch_micro_f1) routing_j["rich_branch_micro_f1"] = *rr.rich_branch_micro_f1;

  json metrics_j = {{"dataset", c.dataset},
                    {"tau", tau},
                    {"tau_source", c.tau ? "override" : "sweep"},
                    {"mode", routing::to_string(c.mode)},
                    {"routing", routing_j}};
  std::string csv = "model,micro_f1,macro_f1,f1_N,f1_S,f1_V,f1_F,beats\n";
  for (std::size_t i = 0; i < 4; ++i) {
    metrics_j[names[i]] = evalx::to_json(metrics[i]);
    csv += metrics_csv_row(names[i], metrics[i]);
  }

  std::string prof = "lo,hi,segments,beats,minimal_f1,rich_f1\n";
  const auto bins = evalx::confidence_profile(profile);
  for (const auto& bin : bins) {
    prof += fmt(bin.lo, "%g") + "," + fmt(bin.hi, "%g") + "," + std::to_string(bin.segments) + "," +
            std::to_string(bin.beats) + "," + (bin.minimal_f1 ? fmt(*bin.minimal_f1) : "") + "," +
            (bin.rich_f1 ? fmt(*bin.rich_f1) : "") + "\n";
  }
  if (auto x = evalx::crossover(bins)) metrics_j["profile_crossover"] = *x;

  StageWriter w(c.output_dir, "evaluate", ctx.hash);
  w.input(stage_key(Stage::Features), feats.artifact_hash);
  w.input(stage_key(Stage::Train), trained.artifact_hash);
  if (sweep) w.input(stage_key(Stage::Sweep), sweep->artifact_hash);
  w.input("routing", routing_settings(c));
  w.write_json("metrics.json", metrics_j);
  w.write("metrics.csv", csv);
  w.write("confusion_routed.csv", evalx::confusion_csv(metrics[0]));
  w.write("confusion_oracle.csv", evalx::confusion_csv(metrics[3]));
  w.write("confidence_profile.csv", prof);
  w.write("routed.jsonl", dump);
  w.commit();
  ctx.log("evaluate: tau " + fmt(tau, "%.6f") + ", routed Micro-F1 " + fmt(metrics[0].micro_f1, "%.4f") +
          ", Macro-F1 " + fmt(metrics[0].macro_f1, "%.4f") + ", avg tool calls " +
          fmt(rr.average_tool_calls, "%.3f"));
}

struct Population {
  std::vector<BeatClass> truth, clean, stressed;
  void add(BeatClass t, BeatClass c, BeatClass s) {
    truth.push_back(t);
    clean.push_back(c);
    stressed.push_back(s);
  }
  void append(const Population& o) {
    truth.insert(truth.end(), o.truth.begin(), o.truth.end());
    clean.insert(clean.end(), o.clean.begin(), o.clean.end());
    stressed.insert(stressed.end(), o.stressed.begin(), o.stressed.end());
  }
  std::array<std::optional<double>, kNumClasses> delta() const {
    if (truth.empty()) return {};
    return evalx::stress_delta(evalx::compute_metrics(clean, truth), evalx::compute_metrics(stressed, truth));
  }
};

void stage_stress(const Context& ctx) {
  const auto& c = ctx.config;
  const auto ingest = require_stage(c.output_dir, "ingest", ctx.hash);
  const auto trained = require_stage(c.output_dir, "train", ctx.hash);
  const auto evaluated = require_stage(c.output_dir, "evaluate", ctx.hash);
  if (evaluated.inputs.count("routing") == 0 || evaluated.inputs.at("routing") != routing_settings(c)) {
    throw DataError("evaluate ran with other routing settings; rerun `beatroute evaluate`");
  }
  const double tau = resolve_tau(ctx);
  const auto split = load_split(ctx);
  const auto minimal = load_model(ctx, "minimal");
  const auto rich = load_model(ctx, "rich");
  const auto base = by_record(read_segments(c.output_dir / "ingest" / "segments.jsonl"));
  std::vector<std::string> names;
  for (const auto& [n, _] : base) {
    if (split.ds2_subjects.count(n)) names.push_back(n);
  }
  const std::uint64_t seed = *c.seed ^ 0x5bd1e995ULL;

  struct Outcome {
    Population mask_non, mis_int, mis_non;
    std::int64_t masked = 0, mislocalized = 0, skipped = 0, masked_scored = 0;
  };
  std::vector<Outcome> outcomes(names.size());

  parallel_for(names.size(), ctx.jobs, [&](std::size_t i) {
    const Record r = load(ctx, names[i]);
    const auto& segs = base.at(names[i]);
    const auto rdiv = features::record_divisor(segs);
    auto& out = outcomes[i];
    auto predict = [&](const Segment& seg, std::span<const std::int64_t> anchors) {
      const auto f = segment_features(r, c.channel, seg, anchors, divisor_for(c, rdiv, anchors));
      std::vector<features::FeatureVector> rows;
      std::vector<model::Posterior> post;
      for (const auto& b : f) {
        rows.push_back(features::assemble(b));
        post.push_back(model::predict(minimal, rows.back()));
      }
      if (rows.empty()) return std::vector<BeatClass>{};
      return routing::route("", post, tau, [&] { return argmax_labels(rich, rows); }, c.mode).labels;
    };
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto& seg = segs[s];
      Rng rng(seed + fnv1a(names[i]) * 131ULL + s);
      const bool selected = rng.uniform() < c.stress_fraction;
      if (!selected || seg.anchors.size() < 3) continue;
      const auto k = static_cast<std::size_t>(rng.index(seg.anchors.size()));
      const auto clean = predict(seg, seg.anchors);

      const auto masked = evalx::stress_mask(seg, k);
      const auto after_mask = predict(seg, masked.anchors);
      ++out.masked;
      for (std::size_t j = 0; j < masked.source.size(); ++j) {
        const auto src = masked.source[j];
        if (src == k) ++out.masked_scored;
        out.mask_non.add(seg.labels[src], clean[src], after_mask[j]);
      }

      const auto magnitude = evalx::kMinShift + static_cast<std::int64_t>(rng.index(evalx::kMaxShift - evalx::kMinShift + 1));
      const auto offset = rng.uniform() < 0.5 ? -magnitude : magnitude;
      const auto moved = evalx::stress_mislocalize(seg, k, offset);
      if (!moved) {
        ++out.skipped;
        continue;
      }
      const auto after_move = predict(seg, moved->anchors);
      ++out.mislocalized;
      for (std::size_t j = 0; j < moved->source.size(); ++j) {
        const auto src = moved->source[j];
        auto& pop = moved->interfered && *moved->interfered == j ? out.mis_int : out.mis_non;
        pop.add(seg.labels[src], clean[src], after_move[j]);
      }
    }
  });

  Outcome total;
  for (const auto& o : outcomes) {
    total.mask_non.append(o.mask_non);
    total.mis_int.append(o.mis_int);
    total.mis_non.append(o.mis_non);
    total.masked += o.masked;
    total.mislocalized += o.mislocalized;
    total.skipped += o.skipped;
    total.masked_scored += o.masked_scored;
  }
  evalx::StressTable table;
  table.mask_non_interfered = total.mask_non.delta();
  table.mislocalize_interfered = total.mis_int.delta();
  table.mislocalize_non_interfered = total.mis_non.delta();
  table.masked_beats = total.masked;
  table.mislocalized_beats = total.mislocalized;
  table.skipped = total.skipped;
  table.seed = seed;

  auto col = [](const std::array<std::optional<double>, kNumClasses>& v) {
    json j = json::object();
    for (auto cl : kAllClasses) j[std::string(1, to_char(cl))] = v[index_of(cl)] ? json(*v[index_of(cl)]) : json(nullptr);
    return j;
  };
  json j = {{"tau", tau},
            {"seed", seed},
            {"masked_beats", total.masked},
            {"mislocalized_beats", total.mislocalized},
            {"skipped", total.skipped},
            {"masked_scored", total.masked_scored},
            {"mask_non_interfered", col(table.mask_non_interfered)},
            {"mislocalize_interfered", col(table.mislocalize_interfered)},
            {"mislocalize_non_interfered", col(table.mislocalize_non_interfered)}};

  StageWriter w(c.output_dir, "stress", ctx.hash);
  w.input(stage_key(Stage::Ingest), ingest.artifact_hash);
  w.input(stage_key(Stage::Train), trained.artifact_hash);
  w.input(stage_key(Stage::Evaluate), evaluated.artifact_hash);
  w.input("routing", routing_settings(c));
  w.write_json("stress.json", j);
  w.write("stress.csv", evalx::stress_csv(table));
  w.commit();
  ctx.log("stress: " + std::to_string(total.masked) + " masked, " + std::to_string(total.mislocalized) +
          " mislocalized, " + std::to_string(total.skipped) + " skipped");
}

void stage_report(const Context& ctx) {
  const auto& c = ctx.config;
  std::map<std::string, StageMeta> metas;
  for (auto s : {Stage::Ingest, Stage::Augment, Stage::Features, Stage::Train, Stage::Evaluate, Stage::Stress}) {
    metas[to_string(s)] = require_stage(c.output_dir, to_string(s), ctx.hash);
  }
  for (auto s : {Stage::Detect, Stage::Sweep}) {
    if (fs::exists(c.output_dir / to_string(s) / "meta.json")) {
      metas[to_string(s)] = require_stage(c.output_dir, to_string(s), ctx.hash);
    }
  }
  for (const auto& [name, m] : metas) {
    for (const auto& [key, hash] : m.inputs) {
      if (key.rfind("stage:", 0) != 0) continue;
      const auto up = key.substr(6);
      const auto it = metas.find(up);
      if (it == metas.end()) throw DataError("stage '" + name + "' depends on missing stage '" + up + "'");
      if (it->second.artifact_hash != hash) {
        throw DataError("stage '" + name + "' was built from an older '" + up + "' artifact; rerun `beatroute " +
                        name + "`");
      }
    }
  }
  if (metas.at("evaluate").inputs.at("routing") != metas.at("stress").inputs.at("routing")) {
    throw DataError("evaluate and stress used different routing settings; rerun `beatroute stress`");
  }

  const auto metrics = json::parse(read_text(c.output_dir / "evaluate" / "metrics.json"));
  const auto stress = json::parse(read_text(c.output_dir / "stress" / "stress.json"));
  const auto counts = json::parse(read_text(c.output_dir / "ingest" / "counts.json"));
  const auto& rt = metrics.at("routing");

  std::string cost = "policy,average_tool_calls,rich_fraction,micro_f1,macro_f1\n";
  cost += "minimal_only," + fmt(routing::kMinimalToolCalls, "%.3f") + ",0.000," +
          fmt(metrics["minimal"]["micro_f1"].get<double>()) + "," + fmt(metrics["minimal"]["macro_f1"].get<double>()) + "\n";
  cost += "rich_only," + fmt(routing::kRichToolCalls, "%.3f") + ",1.000," + fmt(metrics["rich"]["micro_f1"].get<double>()) +
          "," + fmt(metrics["rich"]["macro_f1"].get<double>()) + "\n";
  cost += "routed," + fmt(rt["average_tool_calls"].get<double>(), "%.3f") + "," +
          fmt(rt["rich_fraction"].get<double>(), "%.3f") + "," + fmt(metrics["routed"]["micro_f1"].get<double>()) +
          "," + fmt(metrics["routed"]["macro_f1"].get<double>()) + "\n";

  std::ostringstream s;
  s << "dataset       " << c.dataset << "\n";
  s << "config hash   " << ctx.hash << "\n";
  s << "records       " << counts["n_records"].get<int>() << "  beats " << counts["totals"]["total"].get<long long>()
    << "  (N " << counts["totals"]["N"].get<long long>() << ", S " << counts["totals"]["S"].get<long long>() << ", V "
    << counts["totals"]["V"].get<long long>() << ", F " << counts["totals"]["F"].get<long long>() << ", Q "
    << counts["totals"]["Q"].get<long long>() << ")\n";
  s << "threshold     " << fmt(metrics["tau"].get<double>()) << " (" << metrics["tau_source"].get<std::string>()
    << ", mode " << metrics["mode"].get<std::string>() << ")\n\n";
  s << "model     Micro-F1  Macro-F1  F1_N    F1_S    F1_V    F1_F\n";
  for (const auto* m : {"minimal", "rich", "routed", "oracle"}) {
    const auto& mj = metrics.at(m);
    char line[160];
    std::snprintf(line, sizeof line, "%-9s %-9.4f %-9.4f %-7.4f %-7.4f %-7.4f %.4f\n", m,
                  mj["micro_f1"].get<double>(), mj["macro_f1"].get<double>(), mj["per_class"]["N"]["f1"].get<double>(),
                  mj["per_class"]["S"]["f1"].get<double>(), mj["per_class"]["V"]["f1"].get<double>(),
                  mj["per_class"]["F"]["f1"].get<double>());
    s << line;
  }
  s << "\nrouting       avg tool calls " << fmt(rt["average_tool_calls"].get<double>(), "%.3f") << ", rich fraction "
    << fmt(rt["rich_fraction"].get<double>(), "%.3f") << "\n";
  s << "stress        " << stress["masked_beats"].get<long long>() << " masked, "
    << stress["mislocalized_beats"].get<long long>() << " mislocalized, " << stress["skipped"].get<long long>()
    << " skipped\n\n";
  s << read_text(c.output_dir / "stress" / "stress.csv");

  StageWriter w(c.output_dir, "report", ctx.hash);
  for (const auto& [name, m] : metas) w.input(stage_key(stage_from_string(name)), m.artifact_hash);
  w.write("metrics.csv", read_text(c.output_dir / "evaluate" / "metrics.csv"));
  w.write("routing_cost.csv", cost);
  w.write("stress.csv", read_text(c.output_dir / "stress" / "stress.csv"));
  w.write("summary.txt", s.str());
  w.commit();
  ctx.log(s.str());
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Fetch: return "fetch";
    case Stage::Ingest: return "ingest";
    case Stage::Augment: return "augment";
    case Stage::Detect: return "detect";
    case Stage::Features: return "features";
    case Stage::Train: return "train";
    case Stage::Sweep: return "sweep";
    case Stage::Evaluate: return "evaluate";
    case Stage::Stress: return "stress";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (auto st : {Stage::Fetch, Stage::Ingest, Stage::Augment, Stage::Detect, Stage::Features, Stage::Train,
                  Stage::Sweep, Stage::Evaluate, Stage::Stress, Stage::Report}) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown stage '" + s + "'");
}

std::vector<Stage> pipeline_stages() {
  return {Stage::Ingest, Stage::Augment, Stage::Detect,   Stage::Features, Stage::Train,
          Stage::Sweep,  Stage::Evaluate, Stage::Stress, Stage::Report};
}

Context make_context(RunConfig config, int jobs) {
  if (jobs < 1) throw ValidationError("--jobs must be >= 1");
  Context ctx;
  ctx.config = std::move(config);
  ctx.hash = config_hash(ctx.config);
  ctx.jobs = jobs;
  return ctx;
}

void run_stage(const Context& ctx, Stage stage) {
  validate(ctx.config, stage != Stage::Fetch);
  switch (stage) {
    case Stage::Fetch: return stage_fetch(ctx);
    case Stage::Ingest: return stage_ingest(ctx);
    case Stage::Augment: return stage_augment(ctx);
    case Stage::Detect: return stage_detect(ctx);
    case Stage::Features: return stage_features(ctx);
    case Stage::Train: return stage_train(ctx);
    case Stage::Sweep: return stage_sweep(ctx);
    case Stage::Evaluate: return stage_evaluate(ctx);
    case Stage::Stress: return stage_stress(ctx);
    case Stage::Report: return stage_report(ctx);
  }
}

void run_pipeline(const Context& ctx) {
  for (auto s : pipeline_stages()) run_stage(ctx, s);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<features::BeatFeatures> segment_features(const Record& record, int channel, const Segment& seg,
                                                     std::span<const std::int64_t> anchors,
                                                     const features::RrDivisor& divisor) {
  const auto& x = record.channels.at(static_cast<std::size_t>(channel));
  const auto start = static_cast<std::size_t>(seg.start_sample);
  const auto len = static_cast<std::size_t>(seg.length_samples);
  if (start + len > x.size()) throw DataError("segment of " + seg.record_ref + " runs past the record end");
  return features::extract_segment(std::span(x).subspan(start, len), anchors, record.sampling_rate_hz, divisor);
}

}  // namespace beatroute::pipeline
