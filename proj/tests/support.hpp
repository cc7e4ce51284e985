#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "beatroute/ingest/record.hpp"

namespace testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("beatroute_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline beatroute::Record make_record(const std::string& name, int fs, std::vector<double> signal,
                                     std::vector<beatroute::wfdb::Annotation> annotations) {
  beatroute::Record r;
  r.subject_id = name;
  r.sampling_rate_hz = fs;
  r.channels.push_back(std::move(signal));
  r.adc_gain = {200.0};
  r.adc_zero = {0};
  r.annotations = std::move(annotations);
  return r;
}

}  // namespace testing
