#pragma once

#include <cstdint>
#include <ctime>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aeval/corpus_io.hpp"
#include "aeval/version.hpp"

namespace aeval {

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string hex64(std::uint64_t value) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

inline std::string digest_bytes(std::string_view bytes) {
  return "fnv1a64:" + hex64(fnv1a64(bytes));
}

inline std::string digest_file(const std::string& path) {
  return digest_bytes(io::detail::slurp(path));
}

/// Current time as ISO-8601 UTC.
inline std::string utc_timestamp_now() {
  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

/// Provenance record written next to every command's outputs. Timestamps are
/// wall-clock provenance and sit outside any byte-identity guarantee; the
/// data outputs themselves are the deterministic artifacts.
struct RunManifest {
  std::string command;
  io::json config = io::json::object();
  std::map<std::string, std::string> input_digests;  // path -> digest
  std::vector<std::string> output_paths;
  std::string started_at;
  std::string finished_at;
  std::string tool_version = kVersion;

  void add_input(const std::string& path) {
    input_digests[path] = digest_file(path);
  }

  io::json to_json() const {
    io::json digests = io::json::object();
    for (const auto& [path, digest] : input_digests) digests[path] = digest;
    return io::json{{"command", command},
                    {"tool_version", tool_version},
                    {"config", config},
                    {"input_digests", std::move(digests)},
                    {"output_paths", output_paths},
                    {"started_at", started_at},
                    {"finished_at", finished_at}};
  }

  void write(const std::string& path) const {
    io::detail::spill(path, to_json().dump(2) + "\n");
  }
};

}  // namespace aeval
