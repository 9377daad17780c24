#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpsim {

// One HTTP object download. deps lists transfer ids that must finish before
// this one may start.
struct TransferSpec {
  std::string id;
  std::int64_t size_bytes = 0;
  std::string host;
  bool tls = false;
  std::vector<std::string> deps;

  bool operator==(const TransferSpec&) const = default;
};

struct WorkloadPage {
  std::string name;
  std::vector<TransferSpec> transfers;

  bool operator==(const WorkloadPage&) const = default;
};

// Emulated access network. Downlink only: rtt is the full round trip,
// bandwidth the bottleneck link capacity in bits per second.
struct InterfaceSpec {
  std::string name;
  double rtt_ms = 0.0;
  double bandwidth_bps = 0.0;

  double rtt_s() const { return rtt_ms / 1000.0; }
  double bandwidth_Bps() const { return bandwidth_bps / 8.0; }

  bool operator==(const InterfaceSpec&) const = default;
};

struct NetworkScenario {
  std::vector<InterfaceSpec> interfaces;

  bool operator==(const NetworkScenario&) const = default;
};

enum class BandwidthEstimator { oracle, online };

struct SimConfig {
  int initial_cwnd_segments = 10;
  int mss_bytes = 1460;
  int max_conns_per_server = 6;
  int max_conns_total = 17;
  double idle_timeout = 30.0;  // seconds
  bool pipelining = false;
  int tls_handshake_rtts = 2;
  int new_conn_rtts = 2;
  int reuse_rtts = 1;
  std::uint64_t rng_seed = 0;
  BandwidthEstimator bandwidth_estimator = BandwidthEstimator::oracle;

  bool operator==(const SimConfig&) const = default;
};

// Path selection policy. interface_k pins every transfer to one interface;
// the index is only meaningful for that tag.
struct PolicyKind {
  enum class Tag {
    interface_k,
    round_robin,
    mptcp_if1,
    mptcp_rnd,
    eaf,
    eaf_mptcp,
  };

  Tag tag = Tag::interface_k;
  int iface = 0;

  bool operator==(const PolicyKind&) const = default;

  static PolicyKind interface_fixed(int k) { return {Tag::interface_k, k}; }
  static PolicyKind make(Tag t) { return {t, 0}; }
};

// Canonical names: if1, if2, ... (1-based), rr, mptcp_if1, mptcp_rnd, eaf,
// eaf_mptcp. parse_policy_name throws InvalidInputError on anything else.
std::string policy_name(const PolicyKind& kind);
PolicyKind parse_policy_name(const std::string& name);
std::vector<std::string> known_policy_names();

struct TransferTiming {
  std::string id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<int> interfaces;  // interface indices the carrying connection uses
  std::uint64_t conn_id = 0;
  bool reused = false;

  bool operator==(const TransferTiming&) const = default;
};

struct SimResult {
  double page_load_time = 0.0;
  std::vector<TransferTiming> transfers;  // page order
  std::uint64_t events_processed = 0;

  bool operator==(const SimResult&) const = default;
};

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Bad page, scenario, config, or CLI argument. Maps to exit code 2.
struct InvalidInputError : SimError {
  using SimError::SimError;
};
// HAR documents that do not parse or lack required fields.
struct MalformedHarError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};
// Engine invariant violations; indicates a bug, maps to exit code 1.
struct InternalError : SimError {
  using SimError::SimError;
};
struct DeadlockError : InternalError {
  using InternalError::InternalError;
};
// Speedup analysis requires an ok baseline run per (page, scenario).
struct MissingBaselineError : SimError {
  using SimError::SimError;
};

// Returns human-readable violations; empty means valid. Checks: ids unique
// and non-empty, deps resolve, no dependency cycles, sizes non-negative,
// hosts non-empty, at least one transfer.
std::vector<std::string> validate_page(const WorkloadPage& page);

// Checks interface count within [1, max_interfaces], positive rtt/bandwidth,
// unique names, and config sanity (positive counts, reuse_rtts <=
// new_conn_rtts, positive timeout).
std::vector<std::string> validate_scenario(const NetworkScenario& scenario,
                                           const SimConfig& config,
                                           int max_interfaces = 2);

// JSON (de)serialization. Parsers throw InvalidInputError on malformed
// documents; serialization is deterministic (fixed key order), so equal
// values produce byte-identical strings.
std::string to_json(const WorkloadPage& page);
std::string to_json(const NetworkScenario& scenario);
std::string to_json(const SimConfig& config);
std::string to_json(const SimResult& result);
WorkloadPage page_from_json(const std::string& text);
NetworkScenario scenario_from_json(const std::string& text);
SimConfig config_from_json(const std::string& text);

// Shortest representation with 9 significant digits, '.' decimal separator,
// locale independent. Used for every numeric value we print.
std::string format_number(double v);

}  // namespace mpsim
