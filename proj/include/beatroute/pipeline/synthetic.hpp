#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/ingest/record.hpp"

namespace beatroute::synth {

struct SynthConfig {
  std::vector<std::string> records;
  int sampling_rate_hz = 360;
  double seconds = 120.0;
  double bpm_min = 60.0;
  double bpm_max = 90.0;
  double hrv = 0.02;  // relative jitter of sinus intervals
  // Per-beat probabilities of an ectopic or unclassifiable beat.
  double p_s = 0.06;
  double p_v = 0.06;
  double p_f = 0.03;
  double p_q = 0.01;
  double premature_factor = 0.6;
  double noise_mv = 0.01;
  std::uint64_t seed = 0;
};

struct TruthBeat {
  std::int64_t sample = 0;
  char symbol = 'N';
  std::int64_t pre_rr = 0;  // samples since previous beat (0 for the first)
  std::int64_t sinus_rr = 0;  // baseline interval at that point
};

struct RecordTruth {
  std::string name;
  std::int64_t n_samples = 0;
  std::vector<TruthBeat> beats;
  AamiCounts counts;
};

struct SynthManifest {
  int sampling_rate_hz = 0;
  std::vector<RecordTruth> records;
  AamiCounts totals;
};

/// Writes <name>.hea, <name>.dat (two format-212 channels, gain 200,
/// zero 1024) and <name>.atr per record into `dir`, plus manifest.json.
/// Premature S and V beats arrive at premature_factor x the sinus interval;
/// a V beat is followed by a full compensatory pause.
SynthManifest gen_synthetic(const SynthConfig& config, const std::filesystem::path& dir);

/// Beat placement and waveform without touching disk.
RecordTruth plan_beats(const SynthConfig& config, const std::string& name, std::uint64_t seed);
std::vector<double> render(const RecordTruth& truth, int sampling_rate_hz, double noise_mv, std::uint64_t seed);

/// Gaussian bumps (sigma 10 ms) at a fixed rate with white noise at the
/// given SNR (signal power over the bump train). Returns bump centers.
struct BumpTrain {
  std::vector<double> signal;
  std::vector<std::int64_t> centers;
};
BumpTrain bump_train(double bpm, double seconds, int sampling_rate_hz, double snr_db, std::uint64_t seed);

nlohmann::json to_json(const SynthManifest& m);

/// A ready-to-run synthetic study: records s01..sNN under <root>/data and
/// <root>/config.json whose last `ds2` records form the test split.
struct SynthRun {
  int records = 16;
  int ds2 = 6;
  double seconds = 120.0;
  std::uint64_t seed = 7;
  double noise_mv = 0.01;
  int epochs = 400;
};

struct SynthRunResult {
  SynthManifest manifest;
  std::filesystem::path config_path;
};

SynthRunResult write_synthetic_run(const SynthRun& run, const std::filesystem::path& root);

}  // namespace beatroute::synth
