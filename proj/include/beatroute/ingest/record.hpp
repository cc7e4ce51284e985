#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beatroute/beat_class.hpp"
#include "beatroute/ingest/aami.hpp"
#include "beatroute/ingest/wfdb.hpp"

namespace beatroute {

/// One subject's full recording. Immutable after load; safe to share.
struct Record {
  std::string subject_id;
  int sampling_rate_hz = 0;
  std::vector<std::vector<double>> channels;  // mV, all equal length
  std::vector<double> adc_gain;
  std::vector<int> adc_zero;
  std::vector<wfdb::Annotation> annotations;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
};

/// A beat annotation that survives the AAMI mapping into {N, S, V, F}.
struct Beat {
  std::int64_t sample = 0;
  BeatClass label = BeatClass::N;
};

/// Reads <dir>/<name>.hea, its format-212 signal file(s) and <dir>/<name>.<annotator>.
/// Amplitudes are converted with (raw - adc_zero) / gain.
Record load_record(const std::filesystem::path& dir, const std::string& name,
                   const std::string& annotator = "atr");

/// Checks channel lengths and annotation ordering; throws DataError.
void validate(const Record& record);

/// N/S/V/F beats in sample order (Q and non-beat symbols dropped).
std::vector<Beat> beats(const Record& record);

/// Per-symbol AAMI tallies of the raw annotation stream, Q included.
struct AamiCounts {
  std::array<std::int64_t, 5> by_class{};  // N, S, V, F, Q
  std::int64_t total() const;
  std::int64_t& operator[](AamiClass c);
  std::int64_t operator[](AamiClass c) const;
};

AamiCounts count_aami(const Record& record);

}  // namespace beatroute
