#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace beatroute {

/// Inter-patient protocol: DS1 trains, DS2 tests. DS1 is further split into
/// d1 (classifier training) and d2 (routing-threshold induction).
struct SplitManifest {
  std::set<std::string> ds1_subjects;
  std::set<std::string> ds2_subjects;
  std::set<std::string> d1_subjects;
  std::set<std::string> d2_subjects;
  std::set<std::string> excluded_subjects;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

struct SplitAssignment {
  std::vector<std::string> ds1;
  std::vector<std::string> ds2;
  std::vector<std::string> excluded;
};

/// Standard MIT-BIH inter-patient lists; paced records are excluded.
SplitAssignment mitdb_inter_patient();

/// All 48 MIT-BIH Arrhythmia record names.
std::vector<std::string> mitdb_records();

/// d2 receives round(|ds1| * d2_parts / (d1_parts + d2_parts)) subjects
/// (at least one when |ds1| >= 2), drawn with a seeded shuffle.
SplitManifest build_split(const std::vector<std::string>& subjects, const SplitAssignment& assignment,
                          int d1_parts, int d2_parts, std::uint64_t seed);

/// Throws ValidationError when any subject lands in two of {d1, d2, ds2}.
void validate(const SplitManifest& m);

nlohmann::json to_json(const SplitManifest& m);
SplitManifest split_from_json(const nlohmann::json& j);

}  // namespace beatroute
