#include "beatroute/ingest/wfdb.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "beatroute/errors.hpp"

namespace beatroute::wfdb {
namespace {

constexpr int kSkip = 59;
constexpr int kNum = 60;
constexpr int kSub = 61;
constexpr int kChn = 62;
constexpr int kAux = 63;

int sign_extend12(int v) { return (v & 0x800) ? v - 0x1000 : v; }

// Index = annotation code; '\0' marks codes with no standard meaning.
constexpr std::array<char, 50> kCodeTable = {
    ' ',  'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S',   // 0-9
    'E',  'j', '/', 'Q', '~', '\0', '|', '\0', 's', 'T',  // 10-19
    '*',  'D', '"', '=', 'p', 'B', '^', 't', '+', 'u',   // 20-29
    '?',  '!', '[', ']', 'e', 'n', '@', 'x', 'f', '(',   // 30-39
    ')',  'r', '\0', '\0', '\0', '\0', '\0', '\0', '\0', '\0'};  // 40-49

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

template <typename T>
T parse_number(const std::string& tok, const char* what) {
  T value{};
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(std::string("header: bad ") + what + " '" + tok + "'");
  }
  return value;
}

}  // namespace

std::vector<int> decode_fmt212(std::span<const std::uint8_t> bytes, std::size_t n_samples) {
  const std::size_t needed = (n_samples / 2) * 3 + (n_samples % 2) * 2;
  if (bytes.size() < needed) {
    throw ParseError("format 212: truncated signal, need " + std::to_string(needed) +
                         " bytes for " + std::to_string(n_samples) + " samples",
                     bytes.size());
  }
  std::vector<int> out;
  out.reserve(n_samples);
  std::size_t off = 0;
  while (out.size() < n_samples) {
    const int b0 = bytes[off];
    const int b1 = bytes[off + 1];
    out.push_back(sign_extend12(b0 | ((b1 & 0x0F) << 8)));
    if (out.size() == n_samples) break;
    const int b2 = bytes[off + 2];
    out.push_back(sign_extend12(b2 | ((b1 & 0xF0) << 4)));
    off += 3;
  }
  return out;
}

std::vector<std::uint8_t> encode_fmt212(std::span<const int> samples) {
  std::vector<std::uint8_t> out;
  out.reserve((samples.size() + 1) / 2 * 3);
  for (std::size_t i = 0; i < samples.size(); i += 2) {
    const int a = samples[i];
    const int b = i + 1 < samples.size() ? samples[i + 1] : 0;
    if (a < -2048 || a > 2047 || b < -2048 || b > 2047) {
      throw ValidationError("format 212: sample out of 12-bit range at index " +
                            std::to_string(i));
    }
    const unsigned ua = static_cast<unsigned>(a) & 0xFFF;
    const unsigned ub = static_cast<unsigned>(b) & 0xFFF;
    out.push_back(static_cast<std::uint8_t>(ua & 0xFF));
    out.push_back(static_cast<std::uint8_t>(((ua >> 8) & 0x0F) | ((ub >> 4) & 0xF0)));
    if (i + 1 < samples.size()) out.push_back(static_cast<std::uint8_t>(ub & 0xFF));
  }
  return out;
}

Header parse_header(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(split_ws(line));
  }
  if (lines.empty()) throw ParseError("header: empty");

  const auto& rec = lines.front();
  if (rec.size() < 2) throw ParseError("header: record line needs name and channel count");
  Header h;
  h.record_name = rec[0];
  if (auto slash = h.record_name.find('/'); slash != std::string::npos) {
    throw ParseError("header: multi-segment records are not supported");
  }
  h.n_channels = parse_number<int>(rec[1], "channel count");
  if (rec.size() > 2) {
    // Sampling frequency may carry a counter frequency suffix: "360/..."
    std::string fs = rec[2].substr(0, rec[2].find('/'));
    h.sampling_rate_hz = static_cast<int>(parse_number<double>(fs, "sampling rate"));
  } else {
    h.sampling_rate_hz = 250;
  }
  if (rec.size() > 3) h.n_samples = parse_number<std::int64_t>(rec[3], "sample count");
  if (h.n_channels < 1) throw ParseError("header: channel count must be positive");
  if (h.sampling_rate_hz <= 0) throw ParseError("header: sampling rate must be positive");
  if (static_cast<int>(lines.size()) < 1 + h.n_channels) {
    throw ParseError("header: expected " + std::to_string(h.n_channels) + " signal lines");
  }

  for (int c = 0; c < h.n_channels; ++c) {
    const auto& f = lines[1 + c];
    if (f.size() < 2) throw ParseError("header: signal line " + std::to_string(c) + " too short");
    ChannelSpec ch;
    ch.filename = f[0];
    // Format may carry skew/offset suffixes ("212x1:0"); only the code matters here.
    std::string fmt = f[1];
    fmt = fmt.substr(0, fmt.find_first_of("x:+"));
    ch.format = parse_number<int>(fmt, "format");
    if (f.size() > 2) {
      std::string g = f[2];
      g = g.substr(0, g.find_first_of("(/"));
      ch.gain = parse_number<double>(g, "gain");
      if (ch.gain == 0.0) ch.gain = 200.0;
    }
    if (f.size() > 3) ch.adc_resolution = parse_number<int>(f[3], "ADC resolution");
    if (f.size() > 4) ch.adc_zero = parse_number<int>(f[4], "ADC zero");
    if (f.size() > 5) ch.initial_value = parse_number<int>(f[5], "initial value");
    if (f.size() > 8) {
      for (std::size_t i = 8; i < f.size(); ++i) {
        if (i > 8) ch.description += ' ';
        ch.description += f[i];
      }
    }
    h.channels.push_back(std::move(ch));
  }
  return h;
}

std::string format_header(const Header& header) {
  std::ostringstream out;
  out << header.record_name << ' ' << header.n_channels << ' ' << header.sampling_rate_hz << ' '
      << header.n_samples << '\n';
  for (const auto& ch : header.channels) {
    out << ch.filename << ' ' << ch.format << ' ' << ch.gain << ' ' << ch.adc_resolution << ' '
        << ch.adc_zero << ' ' << ch.initial_value << " 0 0";
    if (!ch.description.empty()) out << ' ' << ch.description;
    out << '\n';
  }
  return out.str();
}

char symbol_for_code(int code) {
  if (code < 0 || code >= static_cast<int>(kCodeTable.size())) return '\0';
  return kCodeTable[static_cast<std::size_t>(code)];
}

int code_for_symbol(char symbol) {
  for (std::size_t i = 1; i < kCodeTable.size(); ++i) {
    if (kCodeTable[i] == symbol) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Annotation> parse_annotations(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 2 != 0) {
    throw ParseError("annotations: odd byte length", bytes.size());
  }
  std::vector<Annotation> out;
  std::int64_t time = 0;
  std::size_t off = 0;
  auto word_at = [&](std::size_t o) {
    return static_cast<unsigned>(bytes[o]) | (static_cast<unsigned>(bytes[o + 1]) << 8);
  };
  while (off + 1 < bytes.size()) {
    const unsigned word = word_at(off);
    const int code = static_cast<int>(word >> 10);
    const unsigned interval = word & 0x3FF;
    const std::size_t here = off;
    off += 2;
    if (word == 0) return out;
    switch (code) {
      case kSkip: {
        if (off + 4 > bytes.size()) throw ParseError("annotations: truncated SKIP", here);
        // PDP-11 long: high 16-bit word first, each word little-endian.
        const std::uint32_t hi = word_at(off);
        const std::uint32_t lo = word_at(off + 2);
        const auto skip = static_cast<std::int32_t>((hi << 16) | lo);
        time += skip;
        off += 4;
        break;
      }
      case kNum:
      case kSub:
      case kChn:
        break;
      case kAux: {
        const std::size_t len = interval + (interval & 1u);
        if (off + len > bytes.size()) throw ParseError("annotations: truncated AUX payload", here);
        off += len;
        break;
      }
      default: {
        const char sym = symbol_for_code(code);
        if (sym == '\0') {
          throw ParseError("annotations: unknown code " + std::to_string(code), here);
        }
        time += interval;
        if (time < 0) throw ParseError("annotations: negative sample index", here);
        out.push_back({time, sym});
      }
    }
  }
  throw ParseError("annotations: stream not terminated by a zero word", bytes.size());
}

std::vector<std::uint8_t> encode_annotations(std::span<const Annotation> annotations) {
  std::vector<std::uint8_t> out;
  auto put_word = [&](unsigned w) {
    out.push_back(static_cast<std::uint8_t>(w & 0xFF));
    out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xFF));
  };
  std::int64_t time = 0;
  for (const auto& a : annotations) {
    const int code = code_for_symbol(a.symbol);
    if (code < 0) throw ValidationError(std::string("annotations: no code for symbol '") + a.symbol + "'");
    std::int64_t delta = a.sample - time;
    if (delta < 0) throw ValidationError("annotations: samples must be non-decreasing");
    if (delta > 0x3FF) {
      put_word(static_cast<unsigned>(kSkip) << 10);
      const auto skip = static_cast<std::uint32_t>(delta);
      put_word(skip >> 16);
      put_word(skip & 0xFFFF);
      delta = 0;
    }
    put_word((static_cast<unsigned>(code) << 10) | static_cast<unsigned>(delta));
    time = a.sample;
  }
  put_word(0);
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace beatroute::wfdb
