#include "mpsim/policies.hpp"

#include <algorithm>

namespace mpsim {

double estimate_available_bandwidth_online(const SimulationState& state,
                                           int iface) {
  const InterfaceRuntime& ir = state.ifaces[iface];
  const double base = ir.max_observed_rate > 0 ? ir.max_observed_rate
                                               : ir.spec.bandwidth_Bps();
  return base / std::max(1, ir.scheduled_object_count);
}

namespace {

double sum_online_estimates(const SimulationState& view,
                            const std::vector<int>& ifaces) {
  double total = 0.0;
  for (int k : ifaces) total += estimate_available_bandwidth_online(view, k);
  return total;
}

// setup + size / estimate, no TLS term: mirrors what a scheduler without
// oracle knowledge of fair shares can compute.
double closed_form_prediction(const SimulationState& view, int transfer_index,
                              const PolicyDecision& option) {
  const TransferSpec& t = view.spec_of(transfer_index);
  const double size = static_cast<double>(t.size_bytes);
  switch (option.kind) {
    case PolicyDecision::Kind::reuse_connection: {
      const ConnectionState& c = view.conn(option.conn_id);
      const int init_iface = c.subflows[c.initial_subflow].iface;
      const double rtt = view.ifaces[init_iface].spec.rtt_s();
      return view.clock + view.config.reuse_rtts * rtt +
             size / sum_online_estimates(view, c.iface_list());
    }
    case PolicyDecision::Kind::new_tcp: {
      const double rtt = view.ifaces[option.iface].spec.rtt_s();
      return view.clock + view.config.new_conn_rtts * rtt +
             size / estimate_available_bandwidth_online(view, option.iface);
    }
    case PolicyDecision::Kind::new_mptcp: {
      const double rtt = view.ifaces[option.iface].spec.rtt_s();
      return view.clock + view.config.new_conn_rtts * rtt +
             size / sum_online_estimates(view, option.ifaces);
    }
    case PolicyDecision::Kind::postpone:
      break;
  }
  throw InternalError("no prediction for this option");
}

double predict_option(const SimulationState& view, int transfer_index,
                      const PolicyDecision& option) {
  if (view.config.bandwidth_estimator == BandwidthEstimator::online)
    return closed_form_prediction(view, transfer_index, option);
  return predict_completion(view, transfer_index, option);
}

}  // namespace

std::vector<Candidate> enumerate_candidates(const SimulationState& view,
                                            int transfer_index,
                                            bool include_mptcp) {
  const int n = static_cast<int>(view.ifaces.size());
  if (include_mptcp && n > 4)
    throw InvalidInputError(
        "eaf_mptcp enumerates interface combinations and supports at most 4 "
        "interfaces");
  const TransferSpec& t = view.spec_of(transfer_index);
  const bool can_open = can_open_connection(view, t.host);

  std::vector<Candidate> out;
  auto add = [&](PolicyDecision d) {
    const double predicted = predict_option(view, transfer_index, d);
    out.push_back(Candidate{std::move(d), predicted});
  };

  // Enumeration order doubles as the tie-break (callers keep the first of
  // equal forecasts): prefer an existing session, then options that keep
  // every path warm, and only then pin a fresh single-path connection.
  // Objects that fit in the initial window forecast identically on all of
  // these, and a pool filled with single-path connections starves later
  // bulk transfers of aggregation.
  for (int k = 0; k < n; ++k) {
    if (const std::uint64_t c = find_reusable_connection(view, t.host, k))
      add(PolicyDecision::reuse(c));
    if (include_mptcp) {
      for (const ConnectionState& c : view.conns) {
        if (!c.open() || !c.mptcp || c.host != t.host) continue;
        if (c.subflows[c.initial_subflow].iface != k) continue;
        const double window =
            view.config.new_conn_rtts * view.ifaces[k].spec.rtt_s();
        if (predicted_idle_time(view, c) <= view.clock + window)
          add(PolicyDecision::reuse(c.id));
      }
    }
  }

  if (include_mptcp && can_open) {
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (__builtin_popcount(mask) < 2) continue;
      std::vector<int> members;
      for (int k = 0; k < n; ++k)
        if (mask & (1u << k)) members.push_back(k);
      for (int init : members) add(PolicyDecision::mptcp(members, init));
    }
  }

  if (can_open)
    for (int k = 0; k < n; ++k) add(PolicyDecision::tcp(k));
  return out;
}

namespace {

PolicyDecision reuse_then_new_on(const SimulationState& view,
                                 const TransferSpec& t, int iface) {
  if (const std::uint64_t c = find_reusable_connection(view, t.host, iface))
    return PolicyDecision::reuse(c);
  if (can_open_connection(view, t.host)) return PolicyDecision::tcp(iface);
  return PolicyDecision::postpone();
}

class InterfacePolicy : public Policy {
 public:
  explicit InterfacePolicy(int iface) : iface_(iface) {}
  PolicyDecision decide(const SimulationState& view, PolicyScratch&,
                        int transfer_index) override {
    if (iface_ >= static_cast<int>(view.ifaces.size()))
      throw InvalidInputError("policy pins interface " +
                              std::to_string(iface_ + 1) +
                              " but the scenario has fewer interfaces");
    return reuse_then_new_on(view, view.spec_of(transfer_index), iface_);
  }

 private:
  int iface_;
};

class RoundRobinPolicy : public Policy {
 public:
  PolicyDecision decide(const SimulationState& view, PolicyScratch& scratch,
                        int transfer_index) override {
    const int n = static_cast<int>(view.ifaces.size());
    const int iface = static_cast<int>(scratch.rr_next % n);
    ++scratch.rr_next;
    return reuse_then_new_on(view, view.spec_of(transfer_index), iface);
  }
};

class MptcpPolicy : public Policy {
 public:
  explicit MptcpPolicy(bool random_initial) : random_initial_(random_initial) {}
  PolicyDecision decide(const SimulationState& view, PolicyScratch& scratch,
                        int transfer_index) override {
    const int n = static_cast<int>(view.ifaces.size());
    const int initial =
        random_initial_ ? static_cast<int>(scratch.rng() % n) : 0;
    const TransferSpec& t = view.spec_of(transfer_index);
    const double window =
        view.config.new_conn_rtts * view.ifaces[initial].spec.rtt_s();
    if (const std::uint64_t c = find_reusable_mptcp(view, t.host, window))
      return PolicyDecision::reuse(c);
    if (can_open_connection(view, t.host)) {
      std::vector<int> members(n);
      for (int k = 0; k < n; ++k) members[k] = k;
      return PolicyDecision::mptcp(std::move(members), initial);
    }
    return PolicyDecision::postpone();
  }

 private:
  bool random_initial_;
};

class EarliestArrivalPolicy : public Policy {
 public:
  explicit EarliestArrivalPolicy(bool with_mptcp) : with_mptcp_(with_mptcp) {}
  PolicyDecision decide(const SimulationState& view, PolicyScratch&,
                        int transfer_index) override {
    const std::vector<Candidate> cands =
        enumerate_candidates(view, transfer_index, with_mptcp_);
    if (cands.empty()) return PolicyDecision::postpone();
    const Candidate* best = &cands.front();
    for (const Candidate& c : cands)
      if (c.predicted_completion < best->predicted_completion) best = &c;
    return best->decision;
  }

 private:
  bool with_mptcp_;
};

}  // namespace

std::unique_ptr<Policy> make_policy(PolicyKind kind) {
  switch (kind.tag) {
    case PolicyKind::Tag::interface_k:
      return std::make_unique<InterfacePolicy>(kind.iface);
    case PolicyKind::Tag::round_robin:
      return std::make_unique<RoundRobinPolicy>();
    case PolicyKind::Tag::mptcp_if1:
      return std::make_unique<MptcpPolicy>(false);
    case PolicyKind::Tag::mptcp_rnd:
      return std::make_unique<MptcpPolicy>(true);
    case PolicyKind::Tag::eaf:
      return std::make_unique<EarliestArrivalPolicy>(false);
    case PolicyKind::Tag::eaf_mptcp:
      return std::make_unique<EarliestArrivalPolicy>(true);
  }
  throw InternalError("unhandled policy kind");
}

SimResult run_simulation(const WorkloadPage& page,
                         const NetworkScenario& scenario, PolicyKind policy,
                         const SimConfig& config, std::ostream* trace) {
  const int n = static_cast<int>(scenario.interfaces.size());
  if (policy.tag == PolicyKind::Tag::interface_k && policy.iface >= n)
    throw InvalidInputError("policy '" + policy_name(policy) +
                            "' needs interface index " +
                            std::to_string(policy.iface + 1) +
                            " but the scenario has " + std::to_string(n));
  if (policy.tag == PolicyKind::Tag::eaf_mptcp && n > 4)
    throw InvalidInputError("eaf_mptcp supports at most 4 interfaces");
  const std::unique_ptr<Policy> p = make_policy(policy);
  return run_with_policy(page, scenario, *p, config, trace);
}

}  // namespace mpsim
