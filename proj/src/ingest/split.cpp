#include "beatroute/ingest/split.hpp"

#include <algorithm>
#include <cmath>

#include "beatroute/errors.hpp"
#include "beatroute/rng.hpp"

namespace beatroute {

SplitAssignment mitdb_inter_patient() {
  return {
      {"101", "106", "108", "109", "112", "114", "115", "116", "118", "119", "122",
       "124", "201", "203", "205", "207", "208", "209", "215", "220", "223", "230"},
      {"100", "103", "105", "111", "113", "117", "121", "123", "200", "202", "210",
       "212", "213", "214", "219", "221", "222", "228", "231", "232", "233", "234"},
      {"102", "104", "107", "217"},
  };
}

std::vector<std::string> mitdb_records() {
  return {"100", "101", "102", "103", "104", "105", "106", "107", "108", "109", "111", "112",
          "113", "114", "115", "116", "117", "118", "119", "121", "122", "123", "124", "200",
          "201", "202", "203", "205", "207", "208", "209", "210", "212", "213", "214", "215",
          "217", "219", "220", "221", "222", "223", "228", "230", "231", "232", "233", "234"};
}

SplitManifest build_split(const std::vector<std::string>& subjects, const SplitAssignment& assignment,
                          int d1_parts, int d2_parts, std::uint64_t seed) {
  if (d1_parts <= 0 || d2_parts <= 0) throw ValidationError("split ratio parts must be positive");

  SplitManifest m;
  m.seed = seed;
  m.ds1_subjects.insert(assignment.ds1.begin(), assignment.ds1.end());
  m.ds2_subjects.insert(assignment.ds2.begin(), assignment.ds2.end());
  m.excluded_subjects.insert(assignment.excluded.begin(), assignment.excluded.end());

  for (const auto& s : m.ds1_subjects) {
    if (m.ds2_subjects.count(s)) throw ValidationError("subject " + s + " assigned to both DS1 and DS2");
    if (m.excluded_subjects.count(s)) throw ValidationError("subject " + s + " both in DS1 and excluded");
  }
  for (const auto& s : m.ds2_subjects) {
    if (m.excluded_subjects.count(s)) throw ValidationError("subject " + s + " both in DS2 and excluded");
  }
  const std::set<std::string> present(subjects.begin(), subjects.end());
  for (const auto& s : present) {
    if (!m.ds1_subjects.count(s) && !m.ds2_subjects.count(s) && !m.excluded_subjects.count(s)) {
      throw ValidationError("subject " + s + " is not assigned to DS1, DS2 or excluded");
    }
  }
  // Lists may name subjects that are not on disk (e.g. a partial download).
  std::erase_if(m.ds1_subjects, [&](const auto& s) { return !present.count(s); });
  std::erase_if(m.ds2_subjects, [&](const auto& s) { return !present.count(s); });
  std::erase_if(m.excluded_subjects, [&](const auto& s) { return !present.count(s); });

  std::vector<std::string> pool(m.ds1_subjects.begin(), m.ds1_subjects.end());
  const double share = static_cast<double>(d2_parts) / (d1_parts + d2_parts);
  auto n_d2 = static_cast<std::size_t>(std::llround(static_cast<double>(pool.size()) * share));
  if (pool.size() >= 2) n_d2 = std::clamp<std::size_t>(n_d2, 1, pool.size() - 1);
  else n_d2 = 0;

  Rng rng(seed);
  rng.shuffle(pool);
  m.d2_subjects.insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_d2));
  m.d1_subjects.insert(pool.begin() + static_cast<std::ptrdiff_t>(n_d2), pool.end());
  validate(m);
  return m;
}

void validate(const SplitManifest& m) {
  for (const auto& s : m.d1_subjects) {
    if (m.d2_subjects.count(s)) throw ValidationError("subject " + s + " in both d1 and d2");
    if (m.ds2_subjects.count(s)) throw ValidationError("subject " + s + " in both d1 and DS2");
    if (!m.ds1_subjects.count(s)) throw ValidationError("d1 subject " + s + " is not in DS1");
  }
  for (const auto& s : m.d2_subjects) {
    if (m.ds2_subjects.count(s)) throw ValidationError("subject " + s + " in both d2 and DS2");
    if (!m.ds1_subjects.count(s)) throw ValidationError("d2 subject " + s + " is not in DS1");
  }
  for (const auto& s : m.ds1_subjects) {
    if (m.ds2_subjects.count(s)) throw ValidationError("subject " + s + " in both DS1 and DS2");
    if (!m.d1_subjects.count(s) && !m.d2_subjects.count(s)) {
      throw ValidationError("DS1 subject " + s + " is in neither d1 nor d2");
    }
  }
}

nlohmann::json to_json(const SplitManifest& m) {
  return {{"ds1", m.ds1_subjects}, {"ds2", m.ds2_subjects}, {"d1", m.d1_subjects},
          {"d2", m.d2_subjects},   {"excluded", m.excluded_subjects}, {"seed", m.seed}};
}

SplitManifest split_from_json(const nlohmann::json& j) {
  SplitManifest m;
  m.ds1_subjects = j.at("ds1").get<std::set<std::string>>();
  m.ds2_subjects = j.at("ds2").get<std::set<std::string>>();
  m.d1_subjects = j.at("d1").get<std::set<std::string>>();
  m.d2_subjects = j.at("d2").get<std::set<std::string>>();
  m.excluded_subjects = j.value("excluded", std::set<std::string>{});
  m.seed = j.at("seed").get<std::uint64_t>();
  validate(m);
  return m;
}

}  // namespace beatroute
