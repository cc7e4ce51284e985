#include "beatroute/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "beatroute/errors.hpp"
#include "beatroute/ingest/wfdb.hpp"
#include "beatroute/pipeline/artifacts.hpp"
#include "beatroute/rng.hpp"

namespace beatroute::synth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Wave {
  double amp;     // mV
  double center;  // s relative to R
  double width;   // s
};

std::vector<Wave> morphology(char symbol) {
  switch (symbol) {
    case 'A':
      return {{-0.10, -0.14, 0.020}, {-0.10, -0.030, 0.010}, {1.15, 0.0, 0.010},
              {-0.25, 0.030, 0.010}, {0.28, 0.25, 0.050}};
    case 'V':
      return {{1.60, 0.0, 0.032}, {-0.60, 0.065, 0.030}, {-0.45, 0.30, 0.070}};
    case 'F':
      return {{0.08, -0.20, 0.025}, {-0.10, -0.035, 0.012}, {1.40, 0.0, 0.020},
              {-0.40, 0.045, 0.020}, {-0.05, 0.27, 0.060}};
    case '/':
      return {{1.00, -0.045, 0.002}, {1.00, 0.0, 0.030}, {-0.30, 0.30, 0.070}};
    default:
      return {{0.15, -0.20, 0.025}, {-0.10, -0.030, 0.010}, {1.20, 0.0, 0.010},
              {-0.25, 0.030, 0.010}, {0.30, 0.25, 0.050}};
  }
}

// Sinus-timed beats only; premature S and V beats are inserted separately.
char draw_sinus_symbol(const SynthConfig& c, Rng& rng) {
  const double u = rng.uniform();
  if (u < c.p_f) return 'F';
  if (u < c.p_f + c.p_q) return '/';
  return 'N';
}

}  // namespace

RecordTruth plan_beats(const SynthConfig& c, const std::string& name, std::uint64_t seed) {
  if (c.sampling_rate_hz <= 0 || !(c.seconds > 0.0) || !(c.bpm_min > 0.0) || c.bpm_max < c.bpm_min) {
    throw ValidationError("synthetic: invalid rate, duration or bpm range");
  }
  Rng rng(seed);
  RecordTruth t;
  t.name = name;
  t.n_samples = static_cast<std::int64_t>(std::llround(c.seconds * c.sampling_rate_hz));
  const double bpm = c.bpm_min + (c.bpm_max - c.bpm_min) * rng.uniform();
  const auto sinus = static_cast<std::int64_t>(std::llround(60.0 * c.sampling_rate_hz / bpm));
  const auto margin = static_cast<std::int64_t>(0.45 * c.sampling_rate_hz);

  const auto premature = static_cast<std::int64_t>(std::llround(c.premature_factor * static_cast<double>(sinus)));
  auto jittered = [&] {
    return static_cast<std::int64_t>(std::llround(static_cast<double>(sinus) * (1.0 + c.hrv * (2.0 * rng.uniform() - 1.0))));
  };

  std::int64_t pos = sinus / 2;
  std::int64_t pre = 0;
  char symbol = 'N';
  while (pos + margin < t.n_samples) {
    t.beats.push_back({pos, symbol, pre, sinus});
    std::int64_t next;
    char next_symbol = 'N';
    if (symbol == 'V') {
      next = 2 * sinus - pre;  // full compensatory pause
    } else if (symbol == 'A') {
      next = jittered();
    } else if (t.beats.size() >= 2 && symbol == 'N' && rng.uniform() < c.p_s + c.p_v) {
      next = premature;
      next_symbol = rng.uniform() * (c.p_s + c.p_v) < c.p_v ? 'V' : 'A';
    } else {
      next = jittered();
      if (t.beats.size() >= 2) next_symbol = draw_sinus_symbol(c, rng);
    }
    pos += next;
    pre = next;
    symbol = next_symbol;
  }
  for (const auto& b : t.beats) {
    const auto cls = map_aami(b.symbol);
    if (cls != AamiClass::NonBeat) ++t.counts[cls];
  }
  return t;
}

std::vector<double> render(const RecordTruth& truth, int fs_hz, double noise_mv, std::uint64_t seed) {
  Rng rng(seed);
  const double amp_scale = 0.8 + 0.4 * rng.uniform();
  const double width_scale = 0.9 + 0.2 * rng.uniform();
  std::vector<double> x(static_cast<std::size_t>(truth.n_samples), 0.0);
  const auto fs = static_cast<double>(fs_hz);
  for (const auto& b : truth.beats) {
    for (const auto& w : morphology(b.symbol)) {
      const double width = w.width * width_scale;
      const double c = static_cast<double>(b.sample) + w.center * fs;
      const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(c - 5 * width * fs));
      const auto hi = std::min<std::int64_t>(truth.n_samples - 1, static_cast<std::int64_t>(c + 5 * width * fs));
      for (auto i = lo; i <= hi; ++i) {
        const double d = (static_cast<double>(i) - c) / (width * fs);
        x[static_cast<std::size_t>(i)] += amp_scale * w.amp * std::exp(-0.5 * d * d);
      }
    }
  }
  if (noise_mv > 0.0) {
    const double phase = 2.0 * M_PI * rng.uniform();
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += 3.0 * noise_mv * std::sin(2.0 * M_PI * 0.3 * static_cast<double>(i) / fs + phase);
      x[i] += noise_mv * rng.normal();
    }
  }
  return x;
}

SynthManifest gen_synthetic(const SynthConfig& c, const fs::path& dir) {
  if (c.records.empty()) throw ValidationError("synthetic: no record names given");
  fs::create_directories(dir);
  SynthManifest m;
  m.sampling_rate_hz = c.sampling_rate_hz;
  constexpr double kGain = 200.0;
  constexpr int kZero = 1024;
  for (std::size_t r = 0; r < c.records.size(); ++r) {
    const auto& name = c.records[r];
    const std::uint64_t seed = c.seed * 1000003ULL + r;
    RecordTruth t = plan_beats(c, name, seed);
    const auto lead0 = render(t, c.sampling_rate_hz, c.noise_mv, seed ^ 0x9E3779B97F4A7C15ULL);
    const auto lead1 = render(t, c.sampling_rate_hz, c.noise_mv, seed ^ 0xC2B2AE3D27D4EB4FULL);

    std::vector<int> interleaved;
    interleaved.reserve(2 * lead0.size());
    auto adc = [&](double mv) {
      return std::clamp(static_cast<int>(std::lround(mv * kGain)) + kZero, -2048, 2047);
    };
    for (std::size_t i = 0; i < lead0.size(); ++i) {
      interleaved.push_back(adc(lead0[i]));
      interleaved.push_back(adc(0.5 * lead1[i]));
    }
    wfdb::write_bytes(dir / (name + ".dat"), wfdb::encode_fmt212(interleaved));

    wfdb::Header h;
    h.record_name = name;
    h.n_channels = 2;
    h.sampling_rate_hz = c.sampling_rate_hz;
    h.n_samples = t.n_samples;
    for (const char* lead : {"MLII", "V1"}) {
      wfdb::ChannelSpec ch;
      ch.filename = name + ".dat";
      ch.gain = kGain;
      ch.adc_resolution = 11;
      ch.adc_zero = kZero;
      ch.initial_value = interleaved[std::string(lead) == "MLII" ? 0 : 1];
      ch.description = lead;
      h.channels.push_back(ch);
    }
    pipeline::atomic_write(dir / (name + ".hea"), wfdb::format_header(h));

    std::vector<wfdb::Annotation> ann;
    ann.push_back({0, '+'});
    for (const auto& b : t.beats) ann.push_back({b.sample, b.symbol});
    wfdb::write_bytes(dir / (name + ".atr"), wfdb::encode_annotations(ann));

    for (std::size_t k = 0; k < 5; ++k) m.totals.by_class[k] += t.counts.by_class[k];
    m.records.push_back(std::move(t));
  }
  pipeline::atomic_write(dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

BumpTrain bump_train(double bpm, double seconds, int fs_hz, double snr_db, std::uint64_t seed) {
  if (!(bpm > 0.0) || !(seconds > 0.0) || fs_hz <= 0) throw ValidationError("bump_train: invalid parameters");
  Rng rng(seed);
  const auto fs = static_cast<double>(fs_hz);
  const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
  BumpTrain out;
  out.signal.assign(n, 0.0);
  const double period = 60.0 / bpm * fs;
  const double sigma = 0.010 * fs;
  const double phase = period * (0.25 + 0.5 * rng.uniform());
  for (double c = phase; c < static_cast<double>(n) - 0.5; c += period) {
    out.centers.push_back(static_cast<std::int64_t>(std::llround(c)));
    const auto lo = static_cast<std::int64_t>(std::max(0.0, c - 6 * sigma));
    const auto hi = static_cast<std::int64_t>(std::min(static_cast<double>(n - 1), c + 6 * sigma));
    for (auto i = lo; i <= hi; ++i) {
      const double d = (static_cast<double>(i) - c) / sigma;
      out.signal[static_cast<std::size_t>(i)] += std::exp(-0.5 * d * d);
    }
  }
  double power = 0.0;
  for (double v : out.signal) power += v * v;
  power /= static_cast<double>(n);
  const double noise_sd = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (double& v : out.signal) v += noise_sd * rng.normal();
  return out;
}

json to_json(const SynthManifest& m) {
  auto counts = [](const AamiCounts& c) {
    return json{{"N", c.by_class[0]}, {"S", c.by_class[1]}, {"V", c.by_class[2]},
                {"F", c.by_class[3]}, {"Q", c.by_class[4]}, {"total", c.total()}};
  };
  json records = json::array();
  for (const auto& r : m.records) {
    json beats = json::array();
    for (const auto& b : r.beats) beats.push_back({b.sample, std::string(1, b.symbol)});
    records.push_back({{"name", r.name}, {"n_samples", r.n_samples}, {"counts", counts(r.counts)}, {"beats", beats}});
  }
  return {{"sampling_rate_hz", m.sampling_rate_hz}, {"totals", counts(m.totals)}, {"records", records}};
}

SynthRunResult write_synthetic_run(const SynthRun& run, const std::filesystem::path& root) {
  if (run.records < 3 || run.ds2 < 1 || run.ds2 > run.records - 2) {
    throw ValidationError("synth: need records >= 3 and 1 <= ds2 <= records - 2");
  }
  SynthConfig cfg;
  cfg.seconds = run.seconds;
  cfg.seed = run.seed;
  cfg.noise_mv = run.noise_mv;
  for (int i = 1; i <= run.records; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "s%02d", i);
    cfg.records.push_back(name);
  }
  SynthRunResult out;
  out.manifest = gen_synthetic(cfg, root / "data");
  const auto cut = cfg.records.begin() + (run.records - run.ds2);
  nlohmann::json config = {
      {"dataset", "synthetic"},
      {"data_dir", "data"},
      {"output_dir", "run"},
      {"seed", run.seed},
      {"split",
       {{"ds1", std::vector<std::string>(cfg.records.begin(), cut)},
        {"ds2", std::vector<std::string>(cut, cfg.records.end())},
        {"excluded", nlohmann::json::array()}}},
      {"model", {{"minimal", {{"epochs", run.epochs}}}, {"rich", {{"epochs", run.epochs}}}}},
  };
  out.config_path = root / "config.json";
  pipeline::atomic_write(out.config_path, config.dump(2) + "\n");
  return out;
}

}  // namespace beatroute::synth
