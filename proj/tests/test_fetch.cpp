#include <doctest.h>

#include <fstream>

#include "beatroute/errors.hpp"
#include "beatroute/hashing.hpp"
#include "beatroute/ingest/fetch.hpp"
#include "beatroute/pipeline/artifacts.hpp"
#include "support.hpp"

using namespace beatroute;
namespace fs = std::filesystem;

namespace {

struct Archive {
  testing::TempDir src{"archive"};
  testing::TempDir dst{"cache"};
  std::map<std::string, std::string> sums;

  Archive() {
    put("r1.hea", "r1 1 360 10\nr1.dat 212 200 11 0 0 0 0\n");
    put("r1.dat", std::string(15, '\x01'));
    put("r1.atr", std::string("\0\0", 2));
    pipeline::atomic_write(src.path() / kChecksumManifest, format_checksum_manifest(sums));
  }
  void put(const std::string& name, const std::string& body) {
    pipeline::atomic_write(src.path() / name, body);
    sums[name] = sha256_hex(body);
  }
  FetchOptions options(bool offline = false) const {
    FetchOptions o;
    o.base_url = "file://" + src.path().string() + "/";
    o.records = {"r1"};
    o.destination = dst.path();
    o.offline = offline;
    return o;
  }
};

FetchStatus status_of(const FetchReport& r, const std::string& file) {
  for (const auto& f : r.files) {
    if (f.filename == file) return f.status;
  }
  FAIL("no entry for " << file);
  return FetchStatus::NetworkError;
}

}  // namespace

TEST_SUITE("fetch") {
  TEST_CASE("checksum manifest format") {
    const std::string a(64, 'a'), d(64, 'd');
    const auto m = parse_checksum_manifest("# comment\n\n" + a + "  x.dat\n" + d + " *y.hea\n");
    CHECK(m.at("x.dat") == a);
    CHECK(m.at("y.hea") == d);
    CHECK_THROWS_AS(parse_checksum_manifest("abc  x.dat\n"), beatroute::ParseError);
    CHECK(parse_checksum_manifest(format_checksum_manifest(m)) == m);
  }

  TEST_CASE("sha256 known vector") {
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("download, then cache hit without network") {
    Archive a;
    const auto first = fetch_dataset(a.options());
    CHECK(first.ok());
    CHECK(status_of(first, "r1.dat") == FetchStatus::Downloaded);
    CHECK(sha256_file(a.dst.path() / "r1.dat") == a.sums.at("r1.dat"));

    const auto second = fetch_dataset(a.options());
    CHECK(second.ok());
    CHECK(second.network_requests == 0);
    for (const auto& f : second.files) CHECK(f.status == FetchStatus::CacheHit);
  }

  TEST_CASE("corrupted download is a checksum mismatch") {
    Archive a;
    pipeline::atomic_write(a.src.path() / "r1.dat", std::string(15, '\x02'));
    const auto r = fetch_dataset(a.options());
    CHECK_FALSE(r.ok());
    CHECK(status_of(r, "r1.dat") == FetchStatus::ChecksumMismatch);
    CHECK_FALSE(fs::exists(a.dst.path() / "r1.dat"));
  }

  TEST_CASE("network failure is reported distinctly") {
    Archive a;
    fs::remove(a.src.path() / "r1.atr");
    const auto r = fetch_dataset(a.options());
    CHECK(status_of(r, "r1.atr") == FetchStatus::NetworkError);
    CHECK(status_of(r, "r1.hea") == FetchStatus::Downloaded);
  }

  TEST_CASE("offline mode never requests") {
    Archive a;
    pipeline::atomic_write(a.dst.path() / kChecksumManifest, format_checksum_manifest(a.sums));
    const auto r = fetch_dataset(a.options(true));
    CHECK(r.network_requests == 0);
    CHECK(status_of(r, "r1.dat") == FetchStatus::MissingOffline);
  }

  TEST_CASE("files absent from the manifest") {
    Archive a;
    auto sums = a.sums;
    sums.erase("r1.atr");
    pipeline::atomic_write(a.dst.path() / kChecksumManifest, format_checksum_manifest(sums));
    const auto r = fetch_dataset(a.options());
    CHECK(status_of(r, "r1.atr") == FetchStatus::MissingChecksum);
  }

  TEST_CASE("interrupted download resumes from the partial file") {
    Archive a;
    std::string body;
    for (int i = 0; i < 5000; ++i) body += static_cast<char>(i % 251);
    a.put("r1.dat", body);
    pipeline::atomic_write(a.src.path() / kChecksumManifest, format_checksum_manifest(a.sums));
    pipeline::atomic_write(a.dst.path() / "r1.dat.part", body.substr(0, 1234));
    const auto r = fetch_dataset(a.options());
    CHECK(r.ok());
    CHECK(pipeline::read_text(a.dst.path() / "r1.dat") == body);
    CHECK_FALSE(fs::exists(a.dst.path() / "r1.dat.part"));
  }
}
