// beatroute: command-line driver for the beat classification and routing pipeline.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "beatroute/errors.hpp"
#include "beatroute/pipeline/artifacts.hpp"
#include "beatroute/pipeline/config.hpp"
#include "beatroute/pipeline/stages.hpp"
#include "beatroute/pipeline/synthetic.hpp"

namespace fs = std::filesystem;
using namespace beatroute;

namespace {

enum Exit { kOk = 0, kValidation = 1, kData = 2, kInternal = 3 };

struct Flags {
  std::string config;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  std::string dataset;
  std::optional<double> tau;
  std::string mode;
  std::string data_dir;
  std::string output_dir;
};

pipeline::RunConfig resolve_config(const Flags& f) {
  pipeline::RunConfig c = f.config.empty() ? pipeline::default_config() : pipeline::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.offline) c.offline = true;
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (f.tau) c.tau = *f.tau;
  if (!f.mode.empty()) c.mode = routing::mode_from_string(f.mode);
  if (!f.data_dir.empty()) c.data_dir = f.data_dir;
  if (!f.output_dir.empty()) c.output_dir = f.output_dir;
  return c;
}

struct SynthFlags {
  std::string out;
  int records = 16;
  int ds2 = 6;
  double seconds = 120.0;
  std::uint64_t seed = 7;
  double noise = 0.01;
};

void run_synth(const SynthFlags& s) {
  synth::SynthRun run;
  run.records = s.records;
  run.ds2 = s.ds2;
  run.seconds = s.seconds;
  run.seed = s.seed;
  run.noise_mv = s.noise;
  const auto r = synth::write_synthetic_run(run, s.out);
  std::cout << "synth: " << r.manifest.records.size() << " records, " << r.manifest.totals.total() << " beats -> "
            << r.config_path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-routed heartbeat classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--jobs", f.jobs, "Worker threads within a stage")->check(CLI::PositiveNumber);
  app.add_option("--seed", f.seed, "Global seed (overrides the config)");
  app.add_flag("--offline", f.offline, "Never touch the network");
  app.add_option("--dataset", f.dataset, "Dataset name recorded in artifacts");
  app.add_option("--tau", f.tau, "Routing threshold override for ablations")->check(CLI::NonNegativeNumber);
  app.add_option("--mode", f.mode, "Segment confidence aggregation")->check(CLI::IsMember({"mean", "min"}));
  app.add_option("--data-dir", f.data_dir, "Directory holding the WFDB files");
  app.add_option("--output-dir", f.output_dir, "Artifact root");
  app.footer(
      "Precedence: flags > config file > built-in defaults. BEATROUTE_CACHE sets the default\n"
      "data directory (<cache>/mitdb). Exit codes: 0 ok, 1 invalid input, 2 data error, 3 internal.");

  std::vector<std::pair<CLI::App*, pipeline::Stage>> stage_cmds;
  for (auto s : {pipeline::Stage::Fetch, pipeline::Stage::Ingest, pipeline::Stage::Augment, pipeline::Stage::Detect,
                 pipeline::Stage::Features, pipeline::Stage::Train, pipeline::Stage::Sweep, pipeline::Stage::Evaluate,
                 pipeline::Stage::Stress, pipeline::Stage::Report}) {
    stage_cmds.emplace_back(app.add_subcommand(pipeline::to_string(s), "Run the " + pipeline::to_string(s) + " stage"), s);
  }
  auto* run = app.add_subcommand("run", "Run ingest through report in order");
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic mini-dataset and a matching config");
  SynthFlags sf;
  synth_cmd->add_option("--out", sf.out, "Output directory")->required();
  synth_cmd->add_option("--records", sf.records, "Number of records");
  synth_cmd->add_option("--ds2", sf.ds2, "Records held out for testing");
  synth_cmd->add_option("--seconds", sf.seconds, "Record duration");
  synth_cmd->add_option("--seed", sf.seed, "Generator seed");
  synth_cmd->add_option("--noise", sf.noise, "White noise sd in mV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (synth_cmd->parsed()) {
      run_synth(sf);
      return kOk;
    }
    auto ctx = pipeline::make_context(resolve_config(f), f.jobs);
    ctx.log = [](const std::string& m) { std::cout << m << (m.empty() || m.back() != '\n' ? "\n" : "") << std::flush; };
    if (run->parsed()) {
      pipeline::run_pipeline(ctx);
      return kOk;
    }
    for (auto& [cmd, stage] : stage_cmds) {
      if (cmd->parsed()) pipeline::run_stage(ctx, stage);
    }
    return kOk;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
