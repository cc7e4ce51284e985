#include "beatroute/pipeline/artifacts.hpp"

#include <fstream>
#include <sstream>

#include "beatroute/errors.hpp"
#include "beatroute/hashing.hpp"

namespace beatroute::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

StageWriter::StageWriter(fs::path root, std::string stage, std::string config_hash)
    : dir_(std::move(root) / stage) {
  meta_.stage = std::move(stage);
  meta_.config_hash = std::move(config_hash);
  fs::create_directories(dir_);
  fs::remove(dir_ / "meta.json");
}

void StageWriter::write(const std::string& file, std::string_view content) {
  atomic_write(dir_ / file, content);
  meta_.outputs[file] = sha256_hex(content);
}

void StageWriter::write_json(const std::string& file, const json& j) { write(file, j.dump(2) + "\n"); }

StageMeta StageWriter::commit() {
  json basis = to_json(meta_);
  basis.erase("artifact_hash");
  meta_.artifact_hash = sha256_hex(basis.dump());
  atomic_write(dir_ / "meta.json", to_json(meta_).dump(2) + "\n");
  return meta_;
}

StageMeta require_stage(const fs::path& root, const std::string& stage, const std::string& config_hash) {
  const auto path = root / stage / "meta.json";
  if (!fs::exists(path)) {
    throw DataError("missing artifacts of stage '" + stage + "' under " + root.string() + "; run `beatroute " +
                    stage + "` first");
  }
  StageMeta m;
  try {
    m = meta_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw DataError("corrupt " + path.string() + ": " + e.what());
  }
  if (m.config_hash != config_hash) {
    throw DataError("stage '" + stage + "' was produced under a different config (hash " + m.config_hash.substr(0, 12) +
                    "); rerun `beatroute " + stage + "`");
  }
  for (const auto& [file, digest] : m.outputs) {
    const auto p = root / stage / file;
    if (!fs::exists(p) || sha256_file(p) != digest) {
      throw DataError("artifact " + p.string() + " is missing or modified; rerun `beatroute " + stage + "`");
    }
  }
  return m;
}

json to_json(const StageMeta& m) {
  return {{"version", kArtifactVersion}, {"stage", m.stage},     {"config_hash", m.config_hash},
          {"inputs", m.inputs},          {"outputs", m.outputs}, {"artifact_hash", m.artifact_hash}};
}

StageMeta meta_from_json(const json& j) {
  StageMeta m;
  m.stage = j.at("stage").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.artifact_hash = j.value("artifact_hash", "");
  return m;
}

}  // namespace beatroute::pipeline
