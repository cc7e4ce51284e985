#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/augment.hpp"
#include "beatroute/ingest/split.hpp"
#include "beatroute/model.hpp"
#include "beatroute/peaks.hpp"
#include "beatroute/routing.hpp"

namespace beatroute::pipeline {

enum class AnchorSource { Annotated, Detected };

struct RunConfig {
  std::string dataset = "mitdb";
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;
  std::string annotator = "atr";
  int channel = 0;

  std::string base_url = "https://physionet.org/files/mitdb/1.0.0/";
  bool offline = false;

  SplitAssignment split;
  int d1_parts = 9;
  int d2_parts = 1;

  double segment_seconds = 10.0;
  augment::TargetRatios targets = augment::default_targets();
  std::vector<double> ladder = augment::default_ladder();

  peaks::DetectorConfig detector;
  double tolerance_ms = peaks::kDefaultToleranceMs;

  AnchorSource anchors = AnchorSource::Annotated;
  features::DivisorMode divisor = features::DivisorMode::RecordMean;

  model::Hyperparameters minimal;
  model::Hyperparameters rich;

  routing::AggregateMode mode = routing::AggregateMode::Mean;
  std::optional<double> tau;

  double stress_fraction = 1.0;  // share of DS2 segments perturbed

  std::vector<std::string> all_records() const;
};

/// MIT-BIH defaults: standard inter-patient lists, data under $BEATROUTE_CACHE
/// (or ./data/mitdb), seed left unset.
RunConfig default_config();

/// Reads a JSON config on top of the defaults. Relative paths resolve against
/// the file's directory. Every problem is reported, one "field: reason" per
/// line, in a single ValidationError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Semantic checks (seed present, ranges, disjoint lists, data_dir exists when
/// `require_data` is set). Throws ValidationError listing every failing field.
void validate(const RunConfig& c, bool require_data);

nlohmann::json to_json(const RunConfig& c);

/// SHA-256 of the canonical JSON without machine-local paths and without the
/// routing section; routing settings are recorded by the stages that use them.
std::string config_hash(const RunConfig& c);

}  // namespace beatroute::pipeline
