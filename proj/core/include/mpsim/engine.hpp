#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mpsim/model.hpp"

namespace mpsim {

constexpr double kInf = std::numeric_limits<double>::infinity();

// What the path selection policy tells the transfer manager to do with one
// enabled transfer.
struct PolicyDecision {
  enum class Kind { reuse_connection, new_tcp, new_mptcp, postpone };

  Kind kind = Kind::postpone;
  std::uint64_t conn_id = 0;  // reuse_connection
  int iface = 0;              // new_tcp: the interface; new_mptcp: initial subflow
  std::vector<int> ifaces;    // new_mptcp: member interfaces, ascending

  static PolicyDecision reuse(std::uint64_t id) {
    PolicyDecision d;
    d.kind = Kind::reuse_connection;
    d.conn_id = id;
    return d;
  }
  static PolicyDecision tcp(int iface) {
    PolicyDecision d;
    d.kind = Kind::new_tcp;
    d.iface = iface;
    return d;
  }
  static PolicyDecision mptcp(std::vector<int> ifaces, int initial) {
    PolicyDecision d;
    d.kind = Kind::new_mptcp;
    d.ifaces = std::move(ifaces);
    d.iface = initial;
    return d;
  }
  static PolicyDecision postpone() { return {}; }

  bool operator==(const PolicyDecision&) const = default;
};

enum class ConnPhase {
  handshaking,
  tls_handshaking,
  requesting,
  receiving,
  idle,
  closed,
};

// One TCP flow. A plain connection has exactly one subflow; an MPTCP
// connection has one per member interface. Slow-start state lives here and
// survives transfer reuse: a flow that once reached its fair share never
// slow-starts again.
struct SubflowState {
  int iface = 0;
  double join_complete_at = kInf;  // may carry data from this instant on
  bool draining = false;           // actively receiving right now
  int ss_round = 0;                // doubling round index, advances per RTT while draining
  bool slow_start_active = true;
  double round_started_at = 0.0;
  double rate = 0.0;  // bytes/s currently allocated by the fair-share model
  std::uint64_t round_epoch = 0;  // invalidates scheduled round_advance events
};

struct ConnectionState {
  std::uint64_t id = 0;
  std::string host;
  bool mptcp = false;
  int initial_subflow = 0;  // index into subflows; carries handshake, TLS, requests
  ConnPhase phase = ConnPhase::handshaking;
  int assigned_transfer = -1;  // page index, -1 if none
  int queued_transfer = -1;    // at most one transfer waits behind the assigned one
  double remaining_bytes = 0.0;
  double idle_since = 0.0;
  double expected_completion = kInf;  // maintained while receiving
  double scheduled_rate = -1.0;       // rate the completion event was computed with
  std::uint64_t completion_epoch = 0;
  std::vector<SubflowState> subflows;

  bool open() const { return phase != ConnPhase::closed; }
  std::vector<int> iface_list() const {
    std::vector<int> v;
    v.reserve(subflows.size());
    for (const SubflowState& s : subflows) v.push_back(s.iface);
    return v;
  }
};

struct InterfaceRuntime {
  InterfaceSpec spec;
  double max_observed_rate = 0.0;  // bytes/s, peak of summed allocations
  int scheduled_object_count = 0;  // placed but unfinished transfers touching this iface
};

enum class EventKind {
  handshake_done,
  tls_done,
  request_arrives,
  transfer_completes,
  idle_timeout,
  retry_postponed,
  subflow_join,
  round_advance,
};

const char* event_kind_name(EventKind kind);

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;  // monotone tiebreak: equal times process in schedule order
  EventKind kind = EventKind::retry_postponed;
  std::uint64_t conn_id = 0;
  int subflow = -1;
  std::uint64_t epoch = 0;  // must match the connection/subflow epoch to be live
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

enum class TransferStatus { pending, placed, done };

struct TransferRuntime {
  TransferStatus status = TransferStatus::pending;
  int unmet_deps = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::uint64_t conn_id = 0;
  bool reused = false;
  std::vector<int> interfaces;
};

// Mutable state policies may use across decisions. Everything else in the
// view is read-only to them.
struct PolicyScratch {
  std::uint64_t rr_next = 0;
  std::mt19937_64 rng;
};

// Whole-simulation state. A plain value: copying it yields an independent
// simulation, which is exactly what completion prediction does.
struct SimulationState {
  const WorkloadPage* page = nullptr;  // borrowed, immutable
  SimConfig config;
  double clock = 0.0;
  std::uint64_t next_seq = 0;
  std::uint64_t next_conn_id = 1;
  std::priority_queue<Event, std::vector<Event>, EventAfter> events;
  std::vector<ConnectionState> conns;  // index == id - 1, closed entries stay
  std::vector<InterfaceRuntime> ifaces;
  std::vector<TransferRuntime> transfers;  // parallel to page->transfers
  std::vector<std::vector<int>> dependents;
  std::map<std::string, int> id_index;
  std::deque<int> postponed;  // FIFO retry queue of transfer indices
  int done_count = 0;
  std::uint64_t events_processed = 0;
  PolicyScratch scratch;

  ConnectionState& conn(std::uint64_t id) { return conns[id - 1]; }
  const ConnectionState& conn(std::uint64_t id) const { return conns[id - 1]; }
  const TransferSpec& spec_of(int transfer_index) const {
    return page->transfers[transfer_index];
  }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyDecision decide(const SimulationState& view,
                                PolicyScratch& scratch,
                                int transfer_index) = 0;
};

// Latency spent before the first payload byte: request round trips plus TLS
// establishment. Reused connections already hold their TLS session, so the
// handshake term applies to fresh connections only.
double transfer_setup_latency(bool reused, bool tls_needed, double rtt_s,
                              const SimConfig& config);

// Fluid slow start: rate during round i is min(icw * 2^i * mss / rtt, fair
// share). Second member reports whether the uncapped rate reached the share,
// i.e. the flow leaves slow start (permanently).
std::pair<double, bool> slow_start_rate(int round_index, double rtt_s,
                                        double fair_share_Bps,
                                        const SimConfig& config);

// Builds the initial state: transfers pending, no connections, clock 0.
// Assumes page and scenario already validated.
SimulationState init_state(const WorkloadPage& page,
                           const NetworkScenario& scenario,
                           const SimConfig& config);

struct FlowRate {
  std::uint64_t conn_id = 0;
  int subflow = 0;
  double rate = 0.0;
};

// Water-filling across the flows currently receiving on the interface:
// equal split, slow-start flows capped at their cwnd-limited rate, surplus
// redistributed until fixpoint. Writes rates back into the subflows, flips
// slow_start_active off for flows whose cwnd rate reached their share, and
// never allocates more than the link bandwidth (checked).
std::vector<FlowRate> recompute_fair_shares(SimulationState& state, int iface);

// Connection reuse per browser semantics: same host, and idle now or
// expected idle before a new connection would be ready (new_conn_rtts *
// rtt(iface)). Only single-interface connections on `iface` are considered.
// Returns 0 when there is no candidate. Ties: idle wins over busy, then
// earliest predicted idle, then lowest id.
std::uint64_t find_reusable_connection(const SimulationState& state,
                                       const std::string& host, int iface);

// Same rule over MPTCP connections, with an explicit admission window in
// seconds (callers derive it from the initial subflow they would use).
std::uint64_t find_reusable_mptcp(const SimulationState& state,
                                  const std::string& host, double window_s);

// Idle now, or the completion-event estimate while receiving with a free
// queue slot; infinity otherwise.
double predicted_idle_time(const SimulationState& state,
                           const ConnectionState& conn);

// True when host and global connection caps leave room for one more.
bool can_open_connection(const SimulationState& state, const std::string& host);

// Creates a connection in handshaking phase and schedules its handshake and
// subflow joins. Secondary subflows complete their join one subflow-RTT
// after the initial handshake. Returns nullopt when connection limits are
// hit (the caller postpones).
std::optional<std::uint64_t> open_connection(SimulationState& state,
                                             const std::string& host,
                                             const std::vector<int>& ifaces,
                                             int initial, bool mptcp);

// Sum of the rates of subflows that have joined by `clock` and are draining.
double mptcp_aggregate_rate(const ConnectionState& conn, double clock);

// Clones the state (dropping transfers that are not placed on a connection
// yet), applies `option` to `transfer_index`, and runs the cloned event loop
// until that transfer completes. The live state is untouched. No policy runs
// inside the clone.
double predict_completion(const SimulationState& state, int transfer_index,
                          const PolicyDecision& option);

// Closes every connection idle for at least config.idle_timeout. Returns how
// many were closed.
int close_idle_connections(SimulationState& state);

// Places a decided transfer: assigns or queues it on a connection, or opens
// a new one (events included), or pushes it on the postponed queue.
void apply_decision(SimulationState& state, int transfer_index,
                    const PolicyDecision& decision);

// Runs a page to completion under the given policy. Validates inputs
// (InvalidInputError), detects stuck simulations (DeadlockError). The trace
// stream, when given, receives one tab-separated line per processed event.
SimResult run_with_policy(const WorkloadPage& page,
                          const NetworkScenario& scenario, Policy& policy,
                          const SimConfig& config,
                          std::ostream* trace = nullptr);

}  // namespace mpsim
