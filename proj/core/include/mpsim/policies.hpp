#pragma once

#include <memory>
#include <vector>

#include "mpsim/engine.hpp"

namespace mpsim {

// One evaluated scheduling option: what the policy could do with a transfer
// and when the transfer would finish if it did.
struct Candidate {
  PolicyDecision decision;
  double predicted_completion = 0.0;
};

// Every option the earliest-arrival policies weigh for a transfer, in
// preference order (per interface ascending: reuse before new; MPTCP
// combinations after all single-path options). Predictions come from state
// cloning, or from the closed-form estimate when the config selects the
// online estimator. include_mptcp additionally enumerates every interface
// combination of size >= 2 with every member as initial subflow; that is
// capped at 4 interfaces.
std::vector<Candidate> enumerate_candidates(const SimulationState& view,
                                            int transfer_index,
                                            bool include_mptcp);

// Prototype-style bandwidth estimate in bytes/s: the peak rate observed on
// the interface divided by the number of objects currently scheduled on it;
// before any observation the configured link bandwidth stands in.
double estimate_available_bandwidth_online(const SimulationState& state,
                                           int iface);

std::unique_ptr<Policy> make_policy(PolicyKind kind);

// Convenience wrapper: validates that the policy fits the scenario, builds
// it, and runs the page.
SimResult run_simulation(const WorkloadPage& page,
                         const NetworkScenario& scenario, PolicyKind policy,
                         const SimConfig& config,
                         std::ostream* trace = nullptr);

}  // namespace mpsim
