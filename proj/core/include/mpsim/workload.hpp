#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpsim/model.hpp"

namespace mpsim {

// One response from a browser capture, reduced to what the simulator needs.
// Times are epoch milliseconds.
struct HarEntry {
  std::string url;
  std::string host;
  bool tls = false;
  std::int64_t size_bytes = 0;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

// Reads a HAR 1.2 document. Body size comes from response.content.size,
// falling back to response.bodySize when that is absent or negative, else 0.
// Throws MalformedHarError naming the offending entry.
std::vector<HarEntry> parse_har(const std::string& text);

// Rebuilds the dependency DAG from observed timing: entry B depends on entry
// A when A finished before B started (plus epsilon slack), edges pointing
// forward in (end time, entry index) order, then transitively reduced.
// A replay never starts an object earlier relative to its predecessors than
// the recorded browser did.
WorkloadPage derive_dependencies(const std::vector<HarEntry>& entries,
                                 double epsilon_ms = 1.0,
                                 const std::string& page_name = "har-page");

struct SyntheticGroup {
  int count = 0;
  std::int64_t size_bytes = 0;
};

struct SyntheticSpec {
  std::vector<SyntheticGroup> groups;
  int host_count = 1;
  bool tls = false;
};

// "16x1KB+8x10KB+4x100KB" -> groups. Sizes take B/KB/MB/GB suffixes
// (binary units); a bare number is bytes.
SyntheticSpec parse_synthetic_groups(const std::string& text);

// A 10 KB root object on host0 plus the group objects, all depending on the
// root, hosts assigned round robin. Deterministic; the seed is accepted for
// signature stability.
WorkloadPage generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace mpsim
