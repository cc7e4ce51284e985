#include <doctest.h>

#include <cstdint>
#include <random>
#include <vector>

#include "beatroute/errors.hpp"
#include "beatroute/ingest/wfdb.hpp"

using namespace beatroute;

namespace {

// Written from the byte layout alone, before looking at the library encoder.
std::vector<std::uint8_t> oracle_pack(const std::vector<int>& v) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const unsigned a = static_cast<unsigned>(v[i]) & 0xFFFu;
    const unsigned b = i + 1 < v.size() ? static_cast<unsigned>(v[i + 1]) & 0xFFFu : 0u;
    out.push_back(static_cast<std::uint8_t>(a & 0xFF));
    out.push_back(static_cast<std::uint8_t>(((a >> 8) & 0x0F) | ((b >> 4) & 0xF0)));
    if (i + 1 < v.size()) out.push_back(static_cast<std::uint8_t>(b & 0xFF));
  }
  return out;
}

void put_word(std::vector<std::uint8_t>& bytes, unsigned code, unsigned interval) {
  const unsigned w = (code << 10) | (interval & 0x3FF);
  bytes.push_back(static_cast<std::uint8_t>(w & 0xFF));
  bytes.push_back(static_cast<std::uint8_t>(w >> 8));
}

}  // namespace

TEST_SUITE("wfdb") {
  TEST_CASE("fmt212 decodes the documented bit layout") {
    const std::vector<std::uint8_t> a = {0x01, 0x00, 0x02};
    CHECK(wfdb::decode_fmt212(a, 2) == std::vector<int>{1, 2});
    const std::vector<std::uint8_t> b = {0xFF, 0x0F, 0x00};
    CHECK(wfdb::decode_fmt212(b, 2) == std::vector<int>{-1, 0});
    const std::vector<std::uint8_t> c = {0x00, 0x88, 0x00};
    CHECK(wfdb::decode_fmt212(c, 2) == std::vector<int>{-2048, -2048});
  }

  TEST_CASE("fmt212 round trip on 10000 random 12-bit pairs") {
    std::mt19937 gen(1234);
    std::uniform_int_distribution<int> dist(-2048, 2047);
    std::vector<int> v(20000);
    for (auto& x : v) x = dist(gen);
    const auto packed = oracle_pack(v);
    CHECK(wfdb::decode_fmt212(packed, v.size()) == v);
    CHECK(wfdb::encode_fmt212(v) == packed);
    CHECK(wfdb::decode_fmt212(wfdb::encode_fmt212(v), v.size()) == v);
  }

  TEST_CASE("fmt212 odd sample count") {
    const std::vector<int> v = {5, -7, 2047};
    const auto packed = oracle_pack(v);
    CHECK(packed.size() == 5);
    CHECK(wfdb::decode_fmt212(packed, 3) == v);
  }

  TEST_CASE("fmt212 truncated input names the byte offset") {
    const std::vector<std::uint8_t> bytes = {0x01, 0x00, 0x02, 0x03};
    try {
      wfdb::decode_fmt212(bytes, 4);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == 4);
    }
  }

  TEST_CASE("fmt212 encoder rejects out-of-range samples") {
    const std::vector<int> v = {2048};
    CHECK_THROWS_AS(wfdb::encode_fmt212(v), ValidationError);
  }

  TEST_CASE("annotation stream basics") {
    std::vector<std::uint8_t> eof = {0x00, 0x00};
    CHECK(wfdb::parse_annotations(eof).empty());

    std::vector<std::uint8_t> one;
    put_word(one, 1, 77);
    put_word(one, 0, 0);
    const auto a = wfdb::parse_annotations(one);
    REQUIRE(a.size() == 1);
    CHECK(a[0] == wfdb::Annotation{77, 'N'});
  }

  TEST_CASE("pseudo-annotations are consumed") {
    std::vector<std::uint8_t> bytes;
    put_word(bytes, 28, 0);  // rhythm change '+' at 0
    put_word(bytes, 63, 3);  // AUX, 3 bytes + pad
    for (std::uint8_t c : {'(', 'N', '\0', '\0'}) bytes.push_back(c);
    put_word(bytes, 1, 100);
    put_word(bytes, 60, 1);  // NUM
    put_word(bytes, 61, 0);  // SUB
    put_word(bytes, 62, 0);  // CHN
    put_word(bytes, 59, 0);  // SKIP 70000 as PDP-11 long: high word first
    const std::uint32_t skip = 70000;
    for (std::uint16_t w : {static_cast<std::uint16_t>(skip >> 16), static_cast<std::uint16_t>(skip & 0xFFFF)}) {
      bytes.push_back(static_cast<std::uint8_t>(w & 0xFF));
      bytes.push_back(static_cast<std::uint8_t>(w >> 8));
    }
    put_word(bytes, 5, 0);  // V at 100 + 70000
    put_word(bytes, 0, 0);
    const auto a = wfdb::parse_annotations(bytes);
    REQUIRE(a.size() == 3);
    CHECK(a[0] == wfdb::Annotation{0, '+'});
    CHECK(a[1] == wfdb::Annotation{100, 'N'});
    CHECK(a[2] == wfdb::Annotation{70100, 'V'});
  }

  TEST_CASE("malformed annotation streams") {
    std::vector<std::uint8_t> odd = {0x00};
    CHECK_THROWS_AS(wfdb::parse_annotations(odd), ParseError);

    std::vector<std::uint8_t> open;
    put_word(open, 1, 10);
    CHECK_THROWS_AS(wfdb::parse_annotations(open), ParseError);

    std::vector<std::uint8_t> unknown;
    put_word(unknown, 1, 10);
    put_word(unknown, 55, 3);
    put_word(unknown, 0, 0);
    try {
      wfdb::parse_annotations(unknown);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == 2);
    }
  }

  TEST_CASE("annotation encode/parse round trip with long gaps") {
    const std::vector<wfdb::Annotation> in = {{0, '+'}, {18, 'N'}, {5000, 'V'}, {5000, 'N'}, {650000, 'A'}, {650001, '/'}};
    CHECK(wfdb::parse_annotations(wfdb::encode_annotations(in)) == in);
  }

  TEST_CASE("symbol code table") {
    CHECK(wfdb::symbol_for_code(1) == 'N');
    CHECK(wfdb::symbol_for_code(5) == 'V');
    CHECK(wfdb::symbol_for_code(12) == '/');
    CHECK(wfdb::code_for_symbol('F') == 6);
    CHECK(wfdb::code_for_symbol('A') == 8);
    CHECK(wfdb::code_for_symbol('?') == 30);
    CHECK(wfdb::code_for_symbol('Z') == -1);
  }

  TEST_CASE("header parse and format") {
    const std::string text =
        "100 2 360 650000\n"
        "100.dat 212 200 11 1024 995 -22131 0 MLII\n"
        "100.dat 212 200 11 1024 1011 20052 0 V5\n"
        "# 69 M 1085 1629 x1\n";
    const auto h = wfdb::parse_header(text);
    CHECK(h.record_name == "100");
    CHECK(h.n_channels == 2);
    CHECK(h.sampling_rate_hz == 360);
    CHECK(h.n_samples == 650000);
    REQUIRE(h.channels.size() == 2);
    CHECK(h.channels[0].filename == "100.dat");
    CHECK(h.channels[0].format == 212);
    CHECK(h.channels[0].gain == doctest::Approx(200.0));
    CHECK(h.channels[0].adc_zero == 1024);
    CHECK(h.channels[1].description == "V5");
    const auto again = wfdb::parse_header(wfdb::format_header(h));
    CHECK(again.n_samples == h.n_samples);
    CHECK(again.channels[1].adc_zero == 1024);
    CHECK_THROWS_AS(wfdb::parse_header("100 2 360 650000\n100.dat 212 200\n"), ParseError);
  }
}
