#pragma once

// Readers and writers for the WFDB file family used by the MIT-BIH
// databases: text headers, format-212 signal files and MIT annotation files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace beatroute::wfdb {

/// Two 12-bit two's-complement samples packed into every 3 bytes:
///   A = b0 | (b1 & 0x0F) << 8,  B = b2 | (b1 & 0xF0) << 4.
/// An odd count consumes the first two bytes of the final group only.
std::vector<int> decode_fmt212(std::span<const std::uint8_t> bytes, std::size_t n_samples);

/// Inverse of decode_fmt212. Values must lie in [-2048, 2047].
std::vector<std::uint8_t> encode_fmt212(std::span<const int> samples);

struct ChannelSpec {
  std::string filename;
  int format = 212;
  double gain = 200.0;  // ADC units per mV
  int adc_resolution = 12;
  int adc_zero = 0;
  int initial_value = 0;
  std::string description;
};

struct Header {
  std::string record_name;
  int n_channels = 0;
  int sampling_rate_hz = 0;
  std::int64_t n_samples = 0;
  std::vector<ChannelSpec> channels;
};

Header parse_header(std::string_view text);
std::string format_header(const Header& header);

struct Annotation {
  std::int64_t sample = 0;
  char symbol = ' ';

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// MIT annotation stream: little-endian 16-bit words, code = word >> 10,
/// interval = word & 0x3FF. SKIP/NUM/SUB/CHN/AUX pseudo-annotations are
/// consumed; a zero word terminates the stream.
std::vector<Annotation> parse_annotations(std::span<const std::uint8_t> bytes);

/// Writes beat/rhythm annotations, inserting SKIP words for long intervals.
std::vector<std::uint8_t> encode_annotations(std::span<const Annotation> annotations);

/// Annotation code <-> mnemonic character (WFDB standard table).
char symbol_for_code(int code);
int code_for_symbol(char symbol);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace beatroute::wfdb
