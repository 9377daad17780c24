#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "mpsim/experiment.hpp"
#include "mpsim/policies.hpp"
#include "mpsim/workload.hpp"

using namespace mpsim;

namespace {

const WorkloadPage& mixed_page() {
  static const WorkloadPage page = generate_synthetic(
      parse_synthetic_groups("16x1KB+8x10KB+4x100KB"), 0);
  return page;
}

void BM_PageLoad(benchmark::State& state, const char* policy_name) {
  const NetworkScenario net = preset_scenario("asymmetric");
  const PolicyKind kind = parse_policy_name(policy_name);
  const SimConfig cfg;
  for (auto _ : state) {
    const SimResult r = run_simulation(mixed_page(), net, kind, cfg);
    benchmark::DoNotOptimize(r.page_load_time);
  }
}

// One big page: the heap and fair-share churn dominate here.
void BM_WidePage(benchmark::State& state) {
  const WorkloadPage page = generate_synthetic(
      {{{static_cast<int>(state.range(0)), 20480}}, 4, false}, 0);
  const NetworkScenario net = preset_scenario("symmetric");
  const SimConfig cfg;
  for (auto _ : state) {
    const SimResult r = run_simulation(
        page, net, PolicyKind{PolicyKind::Tag::eaf, 0}, cfg);
    benchmark::DoNotOptimize(r.page_load_time);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FairShares(benchmark::State& state) {
  const WorkloadPage page{"p", {{"t", 1000, "h", false, {}}}};
  NetworkScenario net{{{"if1", 20.0, 50e6}}};
  SimConfig cfg;
  cfg.max_conns_total = 1 << 20;
  cfg.max_conns_per_server = 1 << 20;
  SimulationState st = init_state(page, net, cfg);
  const int n = static_cast<int>(state.range(0));
  for (int i = 0; i < n; ++i) {
    ConnectionState c;
    c.id = st.next_conn_id++;
    c.host = "h";
    c.phase = ConnPhase::receiving;
    c.remaining_bytes = 1e9;
    SubflowState f;
    f.iface = 0;
    f.draining = true;
    f.join_complete_at = 0.0;
    f.slow_start_active = i % 2 == 0;
    f.ss_round = i % 8;
    c.subflows.push_back(f);
    st.conns.push_back(std::move(c));
  }
  for (auto _ : state) {
    const auto rates = recompute_fair_shares(st, 0);
    benchmark::DoNotOptimize(rates.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_Predict(benchmark::State& state) {
  const WorkloadPage& page = mixed_page();
  const NetworkScenario net = preset_scenario("highly-asym");
  SimulationState st = init_state(page, net, SimConfig{});
  for (auto _ : state) {
    const double t = predict_completion(st, 1, PolicyDecision::tcp(0));
    benchmark::DoNotOptimize(t);
  }
}

void BM_DeriveDependencies(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const int n = static_cast<int>(state.range(0));
  std::vector<HarEntry> entries;
  for (int i = 0; i < n; ++i) {
    HarEntry e;
    e.url = "http://h.example/" + std::to_string(i);
    e.host = "h.example";
    e.size_bytes = 1000;
    e.start_ms = static_cast<double>(rng() % 10000);
    e.end_ms = e.start_ms + 1 + static_cast<double>(rng() % 2000);
    entries.push_back(std::move(e));
  }
  for (auto _ : state) {
    const WorkloadPage page = derive_dependencies(entries);
    benchmark::DoNotOptimize(page.transfers.size());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK_CAPTURE(BM_PageLoad, if1, "if1");
BENCHMARK_CAPTURE(BM_PageLoad, rr, "rr");
BENCHMARK_CAPTURE(BM_PageLoad, mptcp_if1, "mptcp_if1");
BENCHMARK_CAPTURE(BM_PageLoad, eaf, "eaf");
BENCHMARK_CAPTURE(BM_PageLoad, eaf_mptcp, "eaf_mptcp");
BENCHMARK(BM_WidePage)->Arg(64)->Arg(256);
BENCHMARK(BM_FairShares)->Arg(4)->Arg(32)->Arg(256);
BENCHMARK(BM_Predict);
BENCHMARK(BM_DeriveDependencies)->Arg(32)->Arg(256);

BENCHMARK_MAIN();
