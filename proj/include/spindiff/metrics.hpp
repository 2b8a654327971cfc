#pragma once

// Append-only NDJSON event log. One JSON object per line, flushed per row so
// a crash loses at most the line being written. Rows carry only values that
// are deterministic under a fixed seed; wall-clock timing goes to stderr,
// never in here, so reruns and resumed runs produce byte-identical logs.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spindiff/binio.hpp"

namespace spindiff {

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

class MetricsWriter {
public:
  explicit MetricsWriter(const std::string& path)
      : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw IoError("cannot open metrics log: " + path);
  }

  void row(const nlohmann::json& j) {
    out_ << j.dump() << "\n";
    out_.flush();
    if (!out_) throw IoError("metrics log write failed");
  }

private:
  std::ofstream out_;
};

inline std::vector<nlohmann::json> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics log: " + path);
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("metrics log line " + std::to_string(lineno) + " is not JSON: " + e.what());
    }
  }
  return rows;
}

}  // namespace spindiff
