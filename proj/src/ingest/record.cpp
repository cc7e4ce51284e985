#include "beatroute/ingest/record.hpp"

#include <map>
#include <numeric>
#include <sstream>

#include "beatroute/errors.hpp"

namespace beatroute {

Record load_record(const std::filesystem::path& dir, const std::string& name,
                   const std::string& annotator) {
  const auto header_bytes = wfdb::read_bytes(dir / (name + ".hea"));
  const auto header = wfdb::parse_header(
      std::string_view(reinterpret_cast<const char*>(header_bytes.data()), header_bytes.size()));

  Record rec;
  rec.subject_id = name;
  rec.sampling_rate_hz = header.sampling_rate_hz;

  // Channels sharing a file are interleaved frame by frame.
  std::map<std::string, std::vector<int>> file_channels;
  for (int c = 0; c < header.n_channels; ++c) {
    const auto& ch = header.channels[static_cast<std::size_t>(c)];
    if (ch.format != 212) {
      throw DataError(name + ": unsupported signal format " + std::to_string(ch.format) +
                      " (only 212)");
    }
    file_channels[ch.filename].push_back(c);
  }

  rec.channels.resize(static_cast<std::size_t>(header.n_channels));
  for (const auto& [file, chans] : file_channels) {
    const auto bytes = wfdb::read_bytes(dir / file);
    const std::size_t width = chans.size();
    std::size_t frames = static_cast<std::size_t>(header.n_samples);
    if (header.n_samples == 0) {
      frames = bytes.size() / 3 * 2 / width;
    }
    std::vector<int> raw;
    try {
      raw = wfdb::decode_fmt212(bytes, frames * width);
    } catch (const ParseError& e) {
      throw ParseError(name + "/" + file + ": " + e.what(), e.byte_offset());
    }
    for (std::size_t k = 0; k < width; ++k) {
      const auto c = static_cast<std::size_t>(chans[k]);
      const auto& spec = header.channels[c];
      auto& out = rec.channels[c];
      out.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        out[i] = (raw[i * width + k] - spec.adc_zero) / spec.gain;
      }
    }
  }
  for (const auto& ch : header.channels) {
    rec.adc_gain.push_back(ch.gain);
    rec.adc_zero.push_back(ch.adc_zero);
  }

  const auto ann_path = dir / (name + "." + annotator);
  try {
    rec.annotations = wfdb::parse_annotations(wfdb::read_bytes(ann_path));
  } catch (const ParseError& e) {
    throw ParseError(ann_path.filename().string() + ": " + e.what(), e.byte_offset());
  }
  validate(rec);
  return rec;
}

void validate(const Record& record) {
  if (record.sampling_rate_hz <= 0) throw DataError(record.subject_id + ": bad sampling rate");
  for (const auto& ch : record.channels) {
    if (ch.size() != record.length()) {
      throw DataError(record.subject_id + ": channels differ in length");
    }
  }
  const auto n = static_cast<std::int64_t>(record.length());
  std::int64_t prev = -1;
  for (const auto& a : record.annotations) {
    if (a.sample < prev) throw DataError(record.subject_id + ": annotations out of order");
    if (a.sample >= n) {
      throw DataError(record.subject_id + ": annotation at " + std::to_string(a.sample) +
                      " beyond signal end " + std::to_string(n));
    }
    prev = a.sample;
  }
}

std::vector<Beat> beats(const Record& record) {
  std::vector<Beat> out;
  for (const auto& a : record.annotations) {
    if (auto c = to_beat_class(map_aami(a.symbol))) {
      if (!out.empty() && out.back().sample >= a.sample) {
        throw DataError(record.subject_id + ": two beats at sample " + std::to_string(a.sample));
      }
      out.push_back({a.sample, *c});
    }
  }
  return out;
}

std::int64_t AamiCounts::total() const {
  return std::accumulate(by_class.begin(), by_class.end(), std::int64_t{0});
}

std::int64_t& AamiCounts::operator[](AamiClass c) { return by_class.at(static_cast<std::size_t>(c)); }

std::int64_t AamiCounts::operator[](AamiClass c) const {
  return by_class.at(static_cast<std::size_t>(c));
}

AamiCounts count_aami(const Record& record) {
  AamiCounts counts;
  for (const auto& a : record.annotations) {
    const auto c = map_aami(a.symbol);
    if (c != AamiClass::NonBeat) ++counts[c];
  }
  return counts;
}

}  // namespace beatroute
