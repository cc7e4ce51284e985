#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

namespace beatroute::pipeline {

inline constexpr int kArtifactVersion = 1;

/// Writes to <path>.tmp and renames over <path>.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

/// Sidecar describing one stage's outputs. artifact_hash covers the stage
/// name, config hash, upstream hashes and every output digest.
struct StageMeta {
  std::string stage;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // upstream stage or file -> hash
  std::map<std::string, std::string> outputs;  // file name -> sha256
  std::string artifact_hash;
};

class StageWriter {
 public:
  StageWriter(std::filesystem::path root, std::string stage, std::string config_hash);
  std::filesystem::path dir() const { return dir_; }
  void input(const std::string& name, const std::string& hash) { meta_.inputs[name] = hash; }
  void write(const std::string& file, std::string_view content);
  void write_json(const std::string& file, const nlohmann::json& j);
  /// Writes meta.json last; a stage without it counts as not run.
  StageMeta commit();

 private:
  std::filesystem::path dir_;
  StageMeta meta_;
};

/// Loads <root>/<stage>/meta.json. Throws DataError naming the stage to run
/// when it is missing or was produced under another config hash.
StageMeta require_stage(const std::filesystem::path& root, const std::string& stage,
                        const std::string& config_hash);

nlohmann::json to_json(const StageMeta& m);
StageMeta meta_from_json(const nlohmann::json& j);

}  // namespace beatroute::pipeline
