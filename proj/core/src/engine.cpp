#include "mpsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

namespace mpsim {

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::handshake_done: return "handshake_done";
    case EventKind::tls_done: return "tls_done";
    case EventKind::request_arrives: return "request_arrives";
    case EventKind::transfer_completes: return "transfer_completes";
    case EventKind::idle_timeout: return "idle_timeout";
    case EventKind::retry_postponed: return "retry_postponed";
    case EventKind::subflow_join: return "subflow_join";
    case EventKind::round_advance: return "round_advance";
  }
  return "?";
}

double transfer_setup_latency(bool reused, bool tls_needed, double rtt_s,
                              const SimConfig& config) {
  const int rtts = reused ? config.reuse_rtts : config.new_conn_rtts;
  double latency = rtts * rtt_s;
  // A reused connection carries its TLS session; only fresh ones handshake.
  if (tls_needed && !reused) latency += config.tls_handshake_rtts * rtt_s;
  return latency;
}

namespace {

double cwnd_limited_rate(int round_index, double rtt_s,
                         const SimConfig& config) {
  return std::ldexp(
             static_cast<double>(config.initial_cwnd_segments) *
                 config.mss_bytes,
             round_index) /
         rtt_s;
}

}  // namespace

std::pair<double, bool> slow_start_rate(int round_index, double rtt_s,
                                        double fair_share_Bps,
                                        const SimConfig& config) {
  const double uncapped = cwnd_limited_rate(round_index, rtt_s, config);
  return {std::min(uncapped, fair_share_Bps), uncapped >= fair_share_Bps};
}

SimulationState init_state(const WorkloadPage& page,
                           const NetworkScenario& scenario,
                           const SimConfig& config) {
  SimulationState st;
  st.page = &page;
  st.config = config;
  st.scratch.rng.seed(config.rng_seed);
  st.ifaces.reserve(scenario.interfaces.size());
  for (const InterfaceSpec& spec : scenario.interfaces)
    st.ifaces.push_back(InterfaceRuntime{spec, 0.0, 0});
  const int n = static_cast<int>(page.transfers.size());
  st.transfers.resize(n);
  st.dependents.resize(n);
  for (int i = 0; i < n; ++i) st.id_index[page.transfers[i].id] = i;
  for (int i = 0; i < n; ++i) {
    std::set<std::string> uniq(page.transfers[i].deps.begin(),
                               page.transfers[i].deps.end());
    st.transfers[i].unmet_deps = static_cast<int>(uniq.size());
    for (const std::string& d : uniq)
      st.dependents[st.id_index.at(d)].push_back(i);
  }
  return st;
}

namespace {

void schedule(SimulationState& st, double time, EventKind kind,
              std::uint64_t conn_id = 0, int subflow = -1,
              std::uint64_t epoch = 0) {
  if (!(time >= st.clock))
    throw InternalError("event scheduled in the past");
  st.events.push(Event{time, st.next_seq++, kind, conn_id, subflow, epoch});
}

double iface_rtt_s(const SimulationState& st, int iface) {
  return st.ifaces[iface].spec.rtt_s();
}

double conn_initial_rtt_s(const SimulationState& st,
                          const ConnectionState& c) {
  return iface_rtt_s(st, c.subflows[c.initial_subflow].iface);
}

// Advance byte accounting of every draining connection to `now` at the
// currently allocated rates, then move the clock.
void settle(SimulationState& st, double now) {
  const double dt = now - st.clock;
  if (dt > 0) {
    for (ConnectionState& c : st.conns) {
      if (c.phase != ConnPhase::receiving) continue;
      const double rate = mptcp_aggregate_rate(c, st.clock);
      if (rate > 0)
        c.remaining_bytes = std::max(0.0, c.remaining_bytes - dt * rate);
    }
  }
  st.clock = now;
}

void start_drain(SimulationState& st, ConnectionState& c, SubflowState& sub) {
  sub.draining = true;
  sub.round_started_at = st.clock;
  ++sub.round_epoch;
  if (sub.slow_start_active)
    schedule(st, st.clock + iface_rtt_s(st, sub.iface),
             EventKind::round_advance, c.id,
             static_cast<int>(&sub - c.subflows.data()), sub.round_epoch);
}

// Reschedule the completion event of every receiving connection whose
// aggregate rate changed. Rate comparison is exact: unchanged allocations
// come out of the water-filling bit-identical, so stable flows keep their
// already scheduled event.
void refresh_completions(SimulationState& st) {
  for (ConnectionState& c : st.conns) {
    if (c.phase != ConnPhase::receiving) continue;
    const double total = mptcp_aggregate_rate(c, st.clock);
    if (total == c.scheduled_rate) continue;
    if (total <= 0 && c.remaining_bytes > 0)
      throw InternalError("receiving connection with no allocated rate");
    c.scheduled_rate = total;
    ++c.completion_epoch;
    const double tc = c.remaining_bytes <= 0
                          ? st.clock
                          : st.clock + c.remaining_bytes / total;
    c.expected_completion = tc;
    schedule(st, tc, EventKind::transfer_completes, c.id, -1,
             c.completion_epoch);
  }
}

void recompute_all(SimulationState& st) {
  for (int i = 0; i < static_cast<int>(st.ifaces.size()); ++i)
    recompute_fair_shares(st, i);
  refresh_completions(st);
}

void schedule_retry(SimulationState& st) {
  schedule(st, st.clock, EventKind::retry_postponed);
}

}  // namespace

std::vector<FlowRate> recompute_fair_shares(SimulationState& state,
                                            int iface) {
  struct Item {
    ConnectionState* conn;
    SubflowState* sub;
    int sub_idx;
    double cap;
    double rate = 0.0;
    bool capped = false;
  };
  std::vector<Item> items;
  for (ConnectionState& c : state.conns) {
    if (c.phase != ConnPhase::receiving) continue;
    for (std::size_t k = 0; k < c.subflows.size(); ++k) {
      SubflowState& sub = c.subflows[k];
      if (sub.iface != iface || !sub.draining) continue;
      if (sub.join_complete_at > state.clock) continue;
      const double cap =
          sub.slow_start_active
              ? cwnd_limited_rate(sub.ss_round, iface_rtt_s(state, iface),
                                  state.config)
              : kInf;
      items.push_back(Item{&c, &sub, static_cast<int>(k), cap});
    }
  }
  std::vector<FlowRate> result;
  if (items.empty()) return result;

  const double capacity = state.ifaces[iface].spec.bandwidth_Bps();
  double budget = capacity;
  int active = static_cast<int>(items.size());
  // Water-filling: flows whose cwnd cap is below the equal share keep the
  // cap; the freed budget raises everyone else's share until fixpoint.
  while (active > 0) {
    const double share = budget / active;
    bool removed = false;
    for (Item& it : items) {
      if (it.capped || it.cap >= share) continue;
      it.capped = true;
      it.rate = it.cap;
      budget = std::max(0.0, budget - it.cap);
      --active;
      removed = true;
    }
    if (!removed) {
      for (Item& it : items)
        if (!it.capped) it.rate = share;
      break;
    }
  }

  double total = 0.0;
  for (Item& it : items) {
    it.sub->rate = it.rate;
    if (!it.capped && it.sub->slow_start_active) {
      // Uncapped rate reached the fair share: leaves slow start for good.
      it.sub->slow_start_active = false;
      ++it.sub->round_epoch;
    }
    total += it.rate;
    result.push_back(FlowRate{it.conn->id, it.sub_idx, it.rate});
  }
  if (total > capacity * (1.0 + 1e-9) + 1e-6)
    throw InternalError("allocated rates exceed interface capacity");
  if (total > state.ifaces[iface].max_observed_rate)
    state.ifaces[iface].max_observed_rate = total;
  return result;
}

double predicted_idle_time(const SimulationState& state,
                           const ConnectionState& conn) {
  if (conn.phase == ConnPhase::idle) return state.clock;
  if (conn.phase == ConnPhase::receiving && conn.queued_transfer == -1)
    return conn.expected_completion;
  return kInf;
}

namespace {

std::uint64_t pick_reusable(const SimulationState& state,
                            const std::string& host, bool want_mptcp,
                            int iface, double window_s) {
  // Idle connections win outright; among them the lowest id.
  for (const ConnectionState& c : state.conns) {
    if (!c.open() || c.mptcp != want_mptcp || c.host != host) continue;
    if (!want_mptcp && c.subflows[0].iface != iface) continue;
    if (c.phase == ConnPhase::idle) return c.id;
  }
  // Otherwise the earliest connection expected idle within the window it
  // would take to set up a fresh connection instead.
  std::uint64_t best = 0;
  double best_idle = kInf;
  for (const ConnectionState& c : state.conns) {
    if (!c.open() || c.mptcp != want_mptcp || c.host != host) continue;
    if (!want_mptcp && c.subflows[0].iface != iface) continue;
    const double t = predicted_idle_time(state, c);
    if (t <= state.clock + window_s && t < best_idle) {
      best_idle = t;
      best = c.id;
    }
  }
  return best;
}

}  // namespace

std::uint64_t find_reusable_connection(const SimulationState& state,
                                       const std::string& host, int iface) {
  const double window =
      state.config.new_conn_rtts * iface_rtt_s(state, iface);
  return pick_reusable(state, host, false, iface, window);
}

std::uint64_t find_reusable_mptcp(const SimulationState& state,
                                  const std::string& host, double window_s) {
  return pick_reusable(state, host, true, 0, window_s);
}

bool can_open_connection(const SimulationState& state,
                         const std::string& host) {
  int to_host = 0;
  int total = 0;
  for (const ConnectionState& c : state.conns) {
    if (!c.open()) continue;
    ++total;
    if (c.host == host) ++to_host;
  }
  return to_host < state.config.max_conns_per_server &&
         total < state.config.max_conns_total;
}

std::optional<std::uint64_t> open_connection(SimulationState& state,
                                             const std::string& host,
                                             const std::vector<int>& ifaces,
                                             int initial, bool mptcp) {
  if (!can_open_connection(state, host)) return std::nullopt;
  std::vector<int> members = ifaces;
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.empty()) throw InternalError("connection with no interfaces");
  for (int k : members)
    if (k < 0 || k >= static_cast<int>(state.ifaces.size()))
      throw InternalError("interface index out of range");

  ConnectionState c;
  c.id = state.next_conn_id++;
  c.host = host;
  c.mptcp = mptcp;
  c.phase = ConnPhase::handshaking;
  int init_pos = -1;
  for (std::size_t k = 0; k < members.size(); ++k) {
    SubflowState sub;
    sub.iface = members[k];
    c.subflows.push_back(sub);
    if (members[k] == initial) init_pos = static_cast<int>(k);
  }
  if (init_pos < 0) throw InternalError("initial subflow not a member");
  c.initial_subflow = init_pos;

  const double rtt0 = iface_rtt_s(state, initial);
  const double handshake_at = state.clock + rtt0;
  c.subflows[init_pos].join_complete_at = handshake_at;
  for (std::size_t k = 0; k < c.subflows.size(); ++k) {
    if (static_cast<int>(k) == init_pos) continue;
    // Secondary subflows join one own-RTT after the initial handshake.
    c.subflows[k].join_complete_at =
        handshake_at + iface_rtt_s(state, c.subflows[k].iface);
  }
  state.conns.push_back(std::move(c));
  ConnectionState& stored = state.conns.back();
  schedule(state, handshake_at, EventKind::handshake_done, stored.id);
  for (std::size_t k = 0; k < stored.subflows.size(); ++k) {
    if (static_cast<int>(k) == init_pos) continue;
    schedule(state, stored.subflows[k].join_complete_at,
             EventKind::subflow_join, stored.id, static_cast<int>(k));
  }
  return stored.id;
}

double mptcp_aggregate_rate(const ConnectionState& conn, double clock) {
  double total = 0.0;
  for (const SubflowState& sub : conn.subflows)
    if (sub.draining && sub.join_complete_at <= clock) total += sub.rate;
  return total;
}

int close_idle_connections(SimulationState& state) {
  int closed = 0;
  for (ConnectionState& c : state.conns) {
    if (c.phase != ConnPhase::idle) continue;
    if (state.clock >= c.idle_since + state.config.idle_timeout) {
      c.phase = ConnPhase::closed;
      ++closed;
    }
  }
  return closed;
}

void apply_decision(SimulationState& state, int transfer_index,
                    const PolicyDecision& decision) {
  TransferRuntime& tr = state.transfers[transfer_index];
  if (tr.status != TransferStatus::pending)
    throw InternalError("decision applied to a non-pending transfer");
  const TransferSpec& spec = state.spec_of(transfer_index);

  switch (decision.kind) {
    case PolicyDecision::Kind::postpone:
      state.postponed.push_back(transfer_index);
      return;

    case PolicyDecision::Kind::reuse_connection: {
      ConnectionState& c = state.conn(decision.conn_id);
      if (!c.open() || c.host != spec.host)
        throw InternalError("reuse of an unsuitable connection");
      tr.status = TransferStatus::placed;
      tr.start_s = state.clock;
      tr.conn_id = c.id;
      tr.reused = true;
      tr.interfaces = c.iface_list();
      for (int k : tr.interfaces) ++state.ifaces[k].scheduled_object_count;
      if (c.phase == ConnPhase::idle) {
        c.assigned_transfer = transfer_index;
        c.phase = ConnPhase::requesting;
        schedule(state,
                 state.clock +
                     state.config.reuse_rtts * conn_initial_rtt_s(state, c),
                 EventKind::request_arrives, c.id);
      } else {
        if (c.queued_transfer != -1)
          throw InternalError("queue slot already taken");
        c.queued_transfer = transfer_index;
      }
      return;
    }

    case PolicyDecision::Kind::new_tcp:
    case PolicyDecision::Kind::new_mptcp: {
      const bool mptcp = decision.kind == PolicyDecision::Kind::new_mptcp;
      const std::vector<int> members =
          mptcp ? decision.ifaces : std::vector<int>{decision.iface};
      std::optional<std::uint64_t> id =
          open_connection(state, spec.host, members, decision.iface, mptcp);
      if (!id)
        throw InternalError("policy opened a connection past the limits");
      ConnectionState& c = state.conn(*id);
      c.assigned_transfer = transfer_index;
      tr.status = TransferStatus::placed;
      tr.start_s = state.clock;
      tr.conn_id = c.id;
      tr.reused = false;
      tr.interfaces = c.iface_list();
      for (int k : tr.interfaces) ++state.ifaces[k].scheduled_object_count;
      return;
    }
  }
  throw InternalError("unhandled decision kind");
}

namespace {

void decide_and_apply(SimulationState& st, Policy& policy, int idx) {
  const PolicyDecision d = policy.decide(st, st.scratch, idx);
  apply_decision(st, idx, d);
}

// Dispatches one event. Returns the trace subject, or nullopt when the event
// was stale and had no effect.
std::optional<std::string> dispatch(SimulationState& st, const Event& e,
                                    Policy* policy) {
  switch (e.kind) {
    case EventKind::handshake_done: {
      ConnectionState& c = st.conn(e.conn_id);
      if (c.phase != ConnPhase::handshaking)
        throw InternalError("handshake_done on a non-handshaking connection");
      const double rtt0 = conn_initial_rtt_s(st, c);
      if (c.assigned_transfer == -1) {
        // Opened without work attached (possible via the public API): park it.
        c.phase = ConnPhase::idle;
        c.idle_since = st.clock;
        schedule(st, st.clock + st.config.idle_timeout,
                 EventKind::idle_timeout, c.id);
      } else if (st.spec_of(c.assigned_transfer).tls) {
        c.phase = ConnPhase::tls_handshaking;
        schedule(st, st.clock + st.config.tls_handshake_rtts * rtt0,
                 EventKind::tls_done, c.id);
      } else {
        c.phase = ConnPhase::requesting;
        schedule(st, st.clock + (st.config.new_conn_rtts - 1) * rtt0,
                 EventKind::request_arrives, c.id);
      }
      return "c" + std::to_string(c.id);
    }

    case EventKind::tls_done: {
      ConnectionState& c = st.conn(e.conn_id);
      if (c.phase != ConnPhase::tls_handshaking)
        throw InternalError("tls_done on a connection not in TLS handshake");
      c.phase = ConnPhase::requesting;
      schedule(st,
               st.clock +
                   (st.config.new_conn_rtts - 1) * conn_initial_rtt_s(st, c),
               EventKind::request_arrives, c.id);
      return "c" + std::to_string(c.id);
    }

    case EventKind::request_arrives: {
      ConnectionState& c = st.conn(e.conn_id);
      if (c.phase != ConnPhase::requesting)
        throw InternalError("request_arrives on a non-requesting connection");
      c.phase = ConnPhase::receiving;
      c.remaining_bytes =
          static_cast<double>(st.spec_of(c.assigned_transfer).size_bytes);
      c.scheduled_rate = -1.0;
      for (SubflowState& sub : c.subflows)
        if (sub.join_complete_at <= st.clock) start_drain(st, c, sub);
      recompute_all(st);
      return "c" + std::to_string(c.id);
    }

    case EventKind::subflow_join: {
      ConnectionState& c = st.conn(e.conn_id);
      if (!c.open()) return std::nullopt;
      SubflowState& sub = c.subflows[e.subflow];
      if (c.phase == ConnPhase::receiving && !sub.draining) {
        start_drain(st, c, sub);
        recompute_all(st);
      }
      return "c" + std::to_string(c.id);
    }

    case EventKind::round_advance: {
      ConnectionState& c = st.conn(e.conn_id);
      if (c.phase != ConnPhase::receiving) return std::nullopt;
      SubflowState& sub = c.subflows[e.subflow];
      if (!sub.draining || !sub.slow_start_active ||
          sub.round_epoch != e.epoch)
        return std::nullopt;
      ++sub.ss_round;
      if (sub.ss_round > 64)
        throw InternalError("slow start never reached the fair share");
      sub.round_started_at = st.clock;
      ++sub.round_epoch;
      schedule(st, st.clock + iface_rtt_s(st, sub.iface),
               EventKind::round_advance, c.id, e.subflow, sub.round_epoch);
      recompute_all(st);
      return "c" + std::to_string(c.id);
    }

    case EventKind::transfer_completes: {
      ConnectionState& c = st.conn(e.conn_id);
      if (c.phase != ConnPhase::receiving || e.epoch != c.completion_epoch)
        return std::nullopt;
      const int t = c.assigned_transfer;
      if (t < 0) throw InternalError("completion without a transfer");
      if (c.remaining_bytes > 1e-3 + 1e-9 * st.spec_of(t).size_bytes)
        throw InternalError("completion event fired with bytes left");
      c.remaining_bytes = 0.0;

      TransferRuntime& tr = st.transfers[t];
      tr.end_s = st.clock;
      tr.status = TransferStatus::done;
      ++st.done_count;
      for (int k : tr.interfaces) --st.ifaces[k].scheduled_object_count;
      for (SubflowState& sub : c.subflows) {
        if (sub.draining) {
          sub.draining = false;
          ++sub.round_epoch;
        }
      }
      c.expected_completion = kInf;
      c.scheduled_rate = -1.0;
      ++c.completion_epoch;

      if (c.queued_transfer != -1) {
        c.assigned_transfer = c.queued_transfer;
        c.queued_transfer = -1;
        c.phase = ConnPhase::requesting;
        // With pipelining the request went out during the previous response,
        // so the next one starts draining immediately.
        const double wait =
            st.config.pipelining
                ? 0.0
                : st.config.reuse_rtts * conn_initial_rtt_s(st, c);
        schedule(st, st.clock + wait, EventKind::request_arrives, c.id);
      } else {
        c.assigned_transfer = -1;
        c.phase = ConnPhase::idle;
        c.idle_since = st.clock;
        schedule(st, st.clock + st.config.idle_timeout,
                 EventKind::idle_timeout, c.id);
      }
      recompute_all(st);

      if (policy) {
        std::vector<int> ready;
        for (int j : st.dependents[t])
          if (--st.transfers[j].unmet_deps == 0) ready.push_back(j);
        for (int j : ready) decide_and_apply(st, *policy, j);
        if (!st.postponed.empty()) schedule_retry(st);
      }
      return st.spec_of(t).id;
    }

    case EventKind::idle_timeout: {
      const int closed = close_idle_connections(st);
      if (policy && closed > 0 && !st.postponed.empty()) schedule_retry(st);
      return "c" + std::to_string(e.conn_id);
    }

    case EventKind::retry_postponed: {
      if (!policy) return std::nullopt;
      std::deque<int> waiting;
      waiting.swap(st.postponed);
      for (const int idx : waiting) decide_and_apply(st, *policy, idx);
      return "-";
    }
  }
  throw InternalError("unhandled event kind");
}

void run_loop(SimulationState& st, Policy* policy, std::ostream* trace,
              int probe) {
  const int total = static_cast<int>(st.transfers.size());
  std::uint64_t processed_here = 0;
  auto finished = [&] {
    return probe >= 0 ? st.transfers[probe].status == TransferStatus::done
                      : st.done_count >= total;
  };
  while (!finished()) {
    if (st.events.empty()) {
      std::ostringstream msg;
      msg << "no events left but transfers are unfinished:";
      for (int i = 0; i < total; ++i)
        if (st.transfers[i].status != TransferStatus::done)
          msg << " '" << st.spec_of(i).id << "'";
      throw DeadlockError(msg.str());
    }
    const Event e = st.events.top();
    st.events.pop();
    if (e.time < st.clock) throw InternalError("event time went backwards");
    settle(st, e.time);
    const std::optional<std::string> subject = dispatch(st, e, policy);
    if (!subject) continue;
    ++st.events_processed;
    if (++processed_here > 50'000'000)
      throw InternalError("runaway simulation");
    if (trace)
      *trace << format_number(e.time) << '\t' << event_kind_name(e.kind)
             << '\t' << *subject << '\n';
  }
}

}  // namespace

double predict_completion(const SimulationState& state, int transfer_index,
                          const PolicyDecision& option) {
  if (option.kind == PolicyDecision::Kind::postpone)
    throw InternalError("cannot predict a postponed transfer");
  // Clone keeps connections and everything placed on them; transfers not yet
  // decided stay out, and no policy runs inside the clone.
  SimulationState clone = state;
  clone.postponed.clear();
  apply_decision(clone, transfer_index, option);
  run_loop(clone, nullptr, nullptr, transfer_index);
  return clone.transfers[transfer_index].end_s;
}

SimResult run_with_policy(const WorkloadPage& page,
                          const NetworkScenario& scenario, Policy& policy,
                          const SimConfig& config, std::ostream* trace) {
  std::vector<std::string> violations = validate_page(page);
  for (std::string& v : validate_scenario(scenario, config))
    violations.push_back(std::move(v));
  if (!violations.empty()) {
    std::string msg = "invalid input:";
    for (const std::string& v : violations) msg += " " + v + ";";
    msg.pop_back();
    throw InvalidInputError(msg);
  }

  SimulationState st = init_state(page, scenario, config);
  for (int i = 0; i < static_cast<int>(st.transfers.size()); ++i)
    if (st.transfers[i].unmet_deps == 0) decide_and_apply(st, policy, i);
  if (!st.postponed.empty()) schedule_retry(st);
  run_loop(st, &policy, trace, -1);

  SimResult result;
  result.events_processed = st.events_processed;
  for (std::size_t i = 0; i < st.transfers.size(); ++i) {
    const TransferRuntime& tr = st.transfers[i];
    result.transfers.push_back(TransferTiming{
        page.transfers[i].id, tr.start_s, tr.end_s, tr.interfaces, tr.conn_id,
        tr.reused});
    result.page_load_time = std::max(result.page_load_time, tr.end_s);
  }
  return result;
}

}  // namespace mpsim
