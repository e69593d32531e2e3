#pragma once

// Run manifests: every CLI invocation that writes files also records what it
// ran, with which configuration and seed, and the content digest of every
// output it produced. The manifest is written last, atomically, so its
// presence marks a complete run.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rcq {

inline constexpr const char* kToolVersion = "1.0.0";

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);  // throws on read failure

struct ManifestOutput {
  std::string path;
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string command;      // the command line as invoked
  std::string config_json;  // fully resolved configuration (JSON text)
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string started_utc;  // ISO-8601 UTC
  double elapsed_seconds = 0;
  std::vector<ManifestOutput> outputs;

  // Digests an already-written output file and records it.
  void add_output(const std::string& path);
};

std::string manifest_to_json(const RunManifest& m);

// Serializes to a temporary file in the target directory, then renames into
// place so readers never observe a partial manifest.
void write_manifest_atomic(const RunManifest& m, const std::string& path);

std::string utc_timestamp_now();

}  // namespace rcq
