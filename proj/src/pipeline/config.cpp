#include "beatroute/pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "beatroute/errors.hpp"
#include "beatroute/hashing.hpp"

namespace beatroute::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Diagnostics {
 public:
  void add(const std::string& field, const std::string& reason) { lines_.push_back(field + ": " + reason); }
  void raise_if_any(const std::string& context) const {
    if (lines_.empty()) return;
    std::string msg = context;
    for (const auto& l : lines_) msg += "\n  " + l;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> lines_;
};

// Typed field access that records a diagnostic instead of throwing.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, Diagnostics& diag, std::set<std::string> known)
      : obj_(obj), prefix_(std::move(prefix)), diag_(diag) {
    if (!obj_.is_object()) {
      diag_.add(prefix_.empty() ? "<root>" : prefix_, "must be an object");
      return;
    }
    for (const auto& [k, _] : obj_.items()) {
      if (!known.count(k)) diag_.add(path(k), "unknown field");
    }
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null(); }
  const json& at(const std::string& key) const { return obj_.at(key); }

  template <typename T>
  void number(const std::string& key, T& out) {
    if (!has(key)) return;
    const auto& v = at(key);
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return diag_.add(path(key), "must be an integer");
    } else {
      if (!v.is_number()) return diag_.add(path(key), "must be a number");
    }
    out = v.get<T>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!at(key).is_string()) return diag_.add(path(key), "must be a string");
    out = at(key).get<std::string>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) return diag_.add(path(key), "must be true or false");
    out = at(key).get<bool>();
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) return diag_.add(path(key), "must be an array of record names");
    std::vector<std::string> tmp;
    for (const auto& e : v) {
      if (e.is_string()) {
        tmp.push_back(e.get<std::string>());
      } else if (e.is_number_integer()) {
        tmp.push_back(std::to_string(e.get<long long>()));
      } else {
        return diag_.add(path(key), "entries must be strings or integers");
      }
    }
    out = std::move(tmp);
  }

  Diagnostics& diag() { return diag_; }

 private:
  const json& obj_;
  std::string prefix_;
  Diagnostics& diag_;
};

const json& child(const json& j, const std::string& key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

void read_hyper(const json& j, const std::string& prefix, Diagnostics& diag, model::Hyperparameters& h) {
  Reader r(j, prefix, diag, {"epochs", "learning_rate", "l2", "seed", "checkpoint_every"});
  r.number("epochs", h.epochs);
  r.number("learning_rate", h.learning_rate);
  r.number("l2", h.l2);
  r.number("seed", h.seed);
  r.number("checkpoint_every", h.checkpoint_every);
}

json hyper_json(const model::Hyperparameters& h) {
  return {{"epochs", h.epochs},
          {"learning_rate", h.learning_rate},
          {"l2", h.l2},
          {"seed", h.seed},
          {"checkpoint_every", h.checkpoint_every}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

}  // namespace

std::vector<std::string> RunConfig::all_records() const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const auto* list : {&split.ds1, &split.ds2, &split.excluded}) {
    for (const auto& r : *list) {
      if (seen.insert(r).second) out.push_back(r);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig default_config() {
  RunConfig c;
  c.split = mitdb_inter_patient();
  const char* cache = std::getenv("BEATROUTE_CACHE");
  c.data_dir = cache && *cache ? fs::path(cache) / "mitdb" : fs::path("data") / "mitdb";
  c.output_dir = fs::path("runs") / "mitdb";
  c.minimal.seed = 1;
  c.rich.seed = 2;
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c = default_config();
  Diagnostics diag;
  Reader root(j, "", diag,
              {"dataset", "data_dir", "output_dir", "seed", "annotator", "channel", "fetch", "split",
               "segment_seconds", "augment", "detector", "features", "model", "routing", "stress"});
  root.text("dataset", c.dataset);
  if (root.has("data_dir")) {
    std::string p;
    root.text("data_dir", p);
    c.data_dir = resolve(base_dir, p);
  }
  if (root.has("output_dir")) {
    std::string p;
    root.text("output_dir", p);
    c.output_dir = resolve(base_dir, p);
  }
  if (root.has("seed")) {
    if (!j.at("seed").is_number_unsigned()) {
      diag.add("seed", "must be a non-negative integer");
    } else {
      c.seed = j.at("seed").get<std::uint64_t>();
    }
  }
  root.text("annotator", c.annotator);
  root.number("channel", c.channel);
  root.number("segment_seconds", c.segment_seconds);

  Reader fetch(child(j, "fetch"), "fetch", diag, {"base_url", "offline"});
  fetch.text("base_url", c.base_url);
  fetch.boolean("offline", c.offline);

  Reader split(child(j, "split"), "split", diag, {"ds1", "ds2", "excluded", "d1_parts", "d2_parts"});
  split.strings("ds1", c.split.ds1);
  split.strings("ds2", c.split.ds2);
  split.strings("excluded", c.split.excluded);
  split.number("d1_parts", c.d1_parts);
  split.number("d2_parts", c.d2_parts);

  const auto& aug = child(j, "augment");
  Reader augr(aug, "augment", diag, {"targets", "ladder"});
  if (augr.has("targets")) {
    const auto& t = aug.at("targets");
    if (!t.is_object()) {
      diag.add("augment.targets", "must map class letters to ratios");
    } else {
      augment::TargetRatios targets;
      for (const auto& [k, v] : t.items()) {
        auto cls = k.size() == 1 ? class_from_char(k[0]) : std::nullopt;
        if (!cls || *cls == BeatClass::N) {
          diag.add("augment.targets." + k, "class must be one of S, V, F");
        } else if (!v.is_number()) {
          diag.add("augment.targets." + k, "must be a number");
        } else {
          targets[*cls] = v.get<double>();
        }
      }
      c.targets = targets;
    }
  }
  if (augr.has("ladder")) {
    const auto& l = aug.at("ladder");
    std::vector<double> ladder;
    bool ok = l.is_array();
    if (ok) {
      for (const auto& e : l) {
        if (!e.is_number()) {
          ok = false;
          break;
        }
        ladder.push_back(e.get<double>());
      }
    }
    if (!ok) {
      diag.add("augment.ladder", "must be an array of numbers");
    } else {
      c.ladder = ladder;
    }
  }

  Reader det(child(j, "detector"), "detector", diag,
             {"refractory_s", "integration_s", "searchback_factor", "refine_s", "learning_s", "tolerance_ms"});
  det.number("refractory_s", c.detector.refractory_s);
  det.number("integration_s", c.detector.integration_s);
  det.number("searchback_factor", c.detector.searchback_factor);
  det.number("refine_s", c.detector.refine_s);
  det.number("learning_s", c.detector.learning_s);
  det.number("tolerance_ms", c.tolerance_ms);

  Reader feat(child(j, "features"), "features", diag, {"anchors", "divisor"});
  std::string anchors = c.anchors == AnchorSource::Annotated ? "annotated" : "detected";
  feat.text("anchors", anchors);
  if (anchors == "annotated") {
    c.anchors = AnchorSource::Annotated;
  } else if (anchors == "detected") {
    c.anchors = AnchorSource::Detected;
  } else {
    diag.add("features.anchors", "must be \"annotated\" or \"detected\"");
  }
  std::string divisor = c.divisor == features::DivisorMode::RecordMean ? "record_mean" : "segment_mean";
  feat.text("divisor", divisor);
  if (divisor == "record_mean") {
    c.divisor = features::DivisorMode::RecordMean;
  } else if (divisor == "segment_mean") {
    c.divisor = features::DivisorMode::SegmentMean;
  } else {
    diag.add("features.divisor", "must be \"record_mean\" or \"segment_mean\"");
  }

  const auto& mdl = child(j, "model");
  Reader mr(mdl, "model", diag, {"minimal", "rich"});
  if (mr.has("minimal")) read_hyper(mdl.at("minimal"), "model.minimal", diag, c.minimal);
  if (mr.has("rich")) read_hyper(mdl.at("rich"), "model.rich", diag, c.rich);

  Reader rt(child(j, "routing"), "routing", diag, {"mode", "tau"});
  std::string mode = routing::to_string(c.mode);
  rt.text("mode", mode);
  if (mode == "mean" || mode == "min") {
    c.mode = routing::mode_from_string(mode);
  } else {
    diag.add("routing.mode", "must be \"mean\" or \"min\"");
  }
  if (rt.has("tau")) {
    double tau = 0.0;
    rt.number("tau", tau);
    c.tau = tau;
  }

  Reader st(child(j, "stress"), "stress", diag, {"fraction"});
  st.number("fraction", c.stress_fraction);

  diag.raise_if_any("invalid config:");
  return c;
}

void validate(const RunConfig& c, bool require_data) {
  Diagnostics diag;
  if (!c.seed) diag.add("seed", "is required");
  if (c.dataset.empty()) diag.add("dataset", "must not be empty");
  if (c.output_dir.empty()) diag.add("output_dir", "must not be empty");
  if (c.data_dir.empty()) {
    diag.add("data_dir", "must not be empty");
  } else if (require_data && !fs::is_directory(c.data_dir)) {
    diag.add("data_dir", "directory " + c.data_dir.string() + " does not exist (run `beatroute fetch` or `beatroute synth`)");
  }
  if (c.annotator.empty()) diag.add("annotator", "must not be empty");
  if (c.channel < 0) diag.add("channel", "must be >= 0");
  if (!(c.segment_seconds > 0.0)) diag.add("segment_seconds", "must be positive");
  if (c.split.ds1.size() < 2) diag.add("split.ds1", "needs at least two subjects");
  if (c.split.ds2.empty()) diag.add("split.ds2", "must not be empty");
  if (c.d1_parts < 1) diag.add("split.d1_parts", "must be >= 1");
  if (c.d2_parts < 1) diag.add("split.d2_parts", "must be >= 1");
  {
    std::set<std::string> ds1(c.split.ds1.begin(), c.split.ds1.end());
    std::set<std::string> ds2(c.split.ds2.begin(), c.split.ds2.end());
    if (ds1.size() != c.split.ds1.size()) diag.add("split.ds1", "contains duplicates");
    if (ds2.size() != c.split.ds2.size()) diag.add("split.ds2", "contains duplicates");
    for (const auto& s : ds2) {
      if (ds1.count(s)) diag.add("split.ds2", "subject " + s + " is also in ds1");
    }
    for (const auto& s : c.split.excluded) {
      if (ds1.count(s) || ds2.count(s)) diag.add("split.excluded", "subject " + s + " is also in ds1/ds2");
    }
  }
  if (c.ladder.empty()) diag.add("augment.ladder", "must not be empty");
  for (const auto& [cls, ratio] : c.targets) {
    if (!(ratio > 0.0 && ratio <= 1.0)) diag.add(std::string("augment.targets.") + to_char(cls), "must lie in (0, 1]");
  }
  for (double f : c.ladder) {
    if (!(f > 0.0 && f < 1.0)) {
      diag.add("augment.ladder", "fractions must lie strictly inside (0, 1)");
      break;
    }
  }
  if (!(c.detector.refractory_s > 0.0)) diag.add("detector.refractory_s", "must be positive");
  if (!(c.detector.integration_s > 0.0)) diag.add("detector.integration_s", "must be positive");
  if (!(c.detector.searchback_factor > 1.0)) diag.add("detector.searchback_factor", "must be > 1");
  if (!(c.detector.refine_s >= 0.0)) diag.add("detector.refine_s", "must be >= 0");
  if (!(c.detector.learning_s > 0.0)) diag.add("detector.learning_s", "must be positive");
  if (!(c.tolerance_ms > 0.0)) diag.add("detector.tolerance_ms", "must be positive");
  for (const auto& [name, h] : {std::pair{"model.minimal", &c.minimal}, std::pair{"model.rich", &c.rich}}) {
    const std::string p = name;
    if (h->epochs < 1) diag.add(p + ".epochs", "must be >= 1");
    if (!(h->learning_rate > 0.0)) diag.add(p + ".learning_rate", "must be positive");
    if (!(h->l2 >= 0.0)) diag.add(p + ".l2", "must be >= 0");
    if (h->checkpoint_every < 1) diag.add(p + ".checkpoint_every", "must be >= 1");
  }
  if (c.tau && !(*c.tau >= 0.0)) diag.add("routing.tau", "must be >= 0");
  if (!(c.stress_fraction > 0.0 && c.stress_fraction <= 1.0)) diag.add("stress.fraction", "must lie in (0, 1]");
  diag.raise_if_any("invalid config:");
}

json to_json(const RunConfig& c) {
  json targets = json::object();
  for (const auto& [cls, r] : c.targets) targets[std::string(1, to_char(cls))] = r;
  json j = {
      {"dataset", c.dataset},
      {"data_dir", c.data_dir.string()},
      {"output_dir", c.output_dir.string()},
      {"annotator", c.annotator},
      {"channel", c.channel},
      {"fetch", {{"base_url", c.base_url}, {"offline", c.offline}}},
      {"split",
       {{"ds1", c.split.ds1},
        {"ds2", c.split.ds2},
        {"excluded", c.split.excluded},
        {"d1_parts", c.d1_parts},
        {"d2_parts", c.d2_parts}}},
      {"segment_seconds", c.segment_seconds},
      {"augment", {{"targets", targets}, {"ladder", c.ladder}}},
      {"detector",
       {{"refractory_s", c.detector.refractory_s},
        {"integration_s", c.detector.integration_s},
        {"searchback_factor", c.detector.searchback_factor},
        {"refine_s", c.detector.refine_s},
        {"learning_s", c.detector.learning_s},
        {"tolerance_ms", c.tolerance_ms}}},
      {"features",
       {{"anchors", c.anchors == AnchorSource::Annotated ? "annotated" : "detected"},
        {"divisor", c.divisor == features::DivisorMode::RecordMean ? "record_mean" : "segment_mean"}}},
      {"model", {{"minimal", hyper_json(c.minimal)}, {"rich", hyper_json(c.rich)}}},
      {"routing", {{"mode", routing::to_string(c.mode)}, {"tau", c.tau ? json(*c.tau) : json(nullptr)}}},
      {"stress", {{"fraction", c.stress_fraction}}},
  };
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("data_dir");
  j.erase("output_dir");
  j["fetch"].erase("offline");
  j.erase("routing");
  return sha256_hex(j.dump());
}

}  // namespace beatroute::pipeline
