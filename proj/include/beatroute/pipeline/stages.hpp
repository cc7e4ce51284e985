#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "beatroute/features.hpp"
#include "beatroute/ingest/record.hpp"
#include "beatroute/ingest/segment.hpp"
#include "beatroute/pipeline/config.hpp"

namespace beatroute::pipeline {

enum class Stage { Fetch, Ingest, Augment, Detect, Features, Train, Sweep, Evaluate, Stress, Report };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// ingest .. report; fetch is separate because it only fills the data directory.
std::vector<Stage> pipeline_stages();

struct Context {
  RunConfig config;
  std::string hash;
  int jobs = 1;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

/// Validates the config and computes its hash.
Context make_context(RunConfig config, int jobs);

void run_stage(const Context& ctx, Stage stage);
void run_pipeline(const Context& ctx);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Features of every anchor of `seg`, computed on `channel` of its record.
std::vector<features::BeatFeatures> segment_features(const Record& record, int channel, const Segment& seg,
                                                     std::span<const std::int64_t> anchors,
                                                     const features::RrDivisor& divisor);

}  // namespace beatroute::pipeline
