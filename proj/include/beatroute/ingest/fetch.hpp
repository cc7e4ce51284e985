#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace beatroute {

inline constexpr const char* kMitdbBaseUrl = "https://physionet.org/files/mitdb/1.0.0/";
inline constexpr const char* kChecksumManifest = "SHA256SUMS.txt";

struct FetchOptions {
  std::string base_url = kMitdbBaseUrl;
  std::vector<std::string> records;
  std::vector<std::string> extensions = {"hea", "dat", "atr"};
  std::filesystem::path destination;
  bool offline = false;
  long timeout_seconds = 120;
};

enum class FetchStatus {
  CacheHit,          // present locally and checksum verified, no request made
  Downloaded,        // fetched (or resumed) and checksum verified
  NetworkError,      // transfer failed
  ChecksumMismatch,  // bytes present but digest differs from the manifest
  MissingChecksum,   // manifest has no entry for the file
  MissingOffline,    // not cached and offline mode forbids the request
};

struct FetchResult {
  std::string filename;
  FetchStatus status = FetchStatus::NetworkError;
  std::string detail;
};

struct FetchReport {
  std::vector<FetchResult> files;
  int network_requests = 0;

  bool ok() const;
};

/// `sha256  filename` per line; blank lines and '#' comments ignored.
std::map<std::string, std::string> parse_checksum_manifest(std::string_view text);
std::string format_checksum_manifest(const std::map<std::string, std::string>& sums);

/// Downloads <base_url><record>.<ext> into destination, verifying each file
/// against <destination>/SHA256SUMS.txt (fetched from base_url when absent).
/// Interrupted downloads resume from a ".part" file.
FetchReport fetch_dataset(const FetchOptions& options);

std::string to_string(FetchStatus s);

}  // namespace beatroute
