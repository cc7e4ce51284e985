#include "beatroute/ingest/fetch.hpp"

#include <curl/curl.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

#include "beatroute/errors.hpp"
#include "beatroute/hashing.hpp"

namespace beatroute {
namespace fs = std::filesystem;
namespace {

void init_curl() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

struct CurlDeleter {
  void operator()(CURL* c) const { curl_easy_cleanup(c); }
};

std::size_t write_cb(char* ptr, std::size_t size, std::size_t nmemb, void* user) {
  return std::fwrite(ptr, size, nmemb, static_cast<std::FILE*>(user));
}

/// Appends url's body to `part`, resuming at its current size. Returns an
/// error description, empty on success.
std::string download(const std::string& url, const fs::path& part, long timeout) {
  init_curl();
  const auto offset = fs::exists(part) ? static_cast<curl_off_t>(fs::file_size(part)) : 0;
  std::unique_ptr<std::FILE, FileCloser> out(std::fopen(part.c_str(), offset ? "ab" : "wb"));
  if (!out) return "cannot open " + part.string();
  std::unique_ptr<CURL, CurlDeleter> curl(curl_easy_init());
  if (!curl) return "curl initialisation failed";
  char errbuf[CURL_ERROR_SIZE] = {0};
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_cb);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, out.get());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT, timeout);
  curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 20L);
  curl_easy_setopt(curl.get(), CURLOPT_ERRORBUFFER, errbuf);
  if (offset > 0) curl_easy_setopt(curl.get(), CURLOPT_RESUME_FROM_LARGE, offset);
  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) {
    return std::string(curl_easy_strerror(rc)) + (errbuf[0] ? std::string(": ") + errbuf : "");
  }
  return {};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

bool FetchReport::ok() const {
  for (const auto& f : files) {
    if (f.status != FetchStatus::CacheHit && f.status != FetchStatus::Downloaded) return false;
  }
  return true;
}

std::map<std::string, std::string> parse_checksum_manifest(std::string_view text) {
  std::map<std::string, std::string> sums;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string hash, name;
    ls >> hash >> name;
    if (!name.empty() && name[0] == '*') name.erase(0, 1);  // binary-mode marker
    if (hash.size() != 64 || name.empty()) {
      throw ParseError("checksum manifest: malformed line " + std::to_string(line_no));
    }
    sums[name] = hash;
  }
  return sums;
}

std::string format_checksum_manifest(const std::map<std::string, std::string>& sums) {
  std::string out;
  for (const auto& [name, hash] : sums) out += hash + "  " + name + "\n";
  return out;
}

FetchReport fetch_dataset(const FetchOptions& options) {
  FetchReport report;
  fs::create_directories(options.destination);
  std::string base = options.base_url;
  if (!base.empty() && base.back() != '/') base.push_back('/');

  const fs::path manifest_path = options.destination / kChecksumManifest;
  std::map<std::string, std::string> sums;
  std::string manifest_error;
  if (!fs::exists(manifest_path) && !options.offline) {
    const fs::path part = manifest_path.string() + ".part";
    fs::remove(part);
    ++report.network_requests;
    manifest_error = download(base + kChecksumManifest, part, options.timeout_seconds);
    if (manifest_error.empty()) fs::rename(part, manifest_path);
    else fs::remove(part);
  }
  if (fs::exists(manifest_path)) sums = parse_checksum_manifest(read_text(manifest_path));

  for (const auto& rec : options.records) {
    for (const auto& ext : options.extensions) {
      FetchResult r;
      r.filename = rec + "." + ext;
      const fs::path target = options.destination / r.filename;
      const auto expected = sums.find(r.filename);
      if (expected == sums.end()) {
        if (!manifest_error.empty()) {
          r.status = FetchStatus::NetworkError;
          r.detail = "checksum manifest unavailable: " + manifest_error;
        } else {
          r.status = FetchStatus::MissingChecksum;
          r.detail = "no entry in " + manifest_path.string();
        }
        report.files.push_back(std::move(r));
        continue;
      }
      if (fs::exists(target)) {
        const auto actual = sha256_file(target);
        if (actual == expected->second) {
          r.status = FetchStatus::CacheHit;
          report.files.push_back(std::move(r));
          continue;
        }
        if (options.offline) {
          r.status = FetchStatus::ChecksumMismatch;
          r.detail = "cached file digest " + actual + " != " + expected->second;
          report.files.push_back(std::move(r));
          continue;
        }
        fs::remove(target);
      }
      if (options.offline) {
        r.status = FetchStatus::MissingOffline;
        r.detail = "not cached and offline mode is set";
        report.files.push_back(std::move(r));
        continue;
      }
      const fs::path part = target.string() + ".part";
      ++report.network_requests;
      const auto err = download(base + r.filename, part, options.timeout_seconds);
      if (!err.empty()) {
        r.status = FetchStatus::NetworkError;
        r.detail = err;  // .part kept for resumption
      } else {
        const auto actual = sha256_file(part);
        if (actual != expected->second) {
          r.status = FetchStatus::ChecksumMismatch;
          r.detail = "downloaded digest " + actual + " != " + expected->second;
          fs::remove(part);
        } else {
          fs::rename(part, target);
          r.status = FetchStatus::Downloaded;
        }
      }
      report.files.push_back(std::move(r));
    }
  }
  return report;
}

std::string to_string(FetchStatus s) {
  switch (s) {
    case FetchStatus::CacheHit: return "cache-hit";
    case FetchStatus::Downloaded: return "downloaded";
    case FetchStatus::NetworkError: return "network-error";
    case FetchStatus::ChecksumMismatch: return "checksum-mismatch";
    case FetchStatus::MissingChecksum: return "missing-checksum";
    case FetchStatus::MissingOffline: return "missing-offline";
  }
  return "unknown";
}

}  // namespace beatroute
