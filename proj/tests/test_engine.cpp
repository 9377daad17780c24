#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "mpsim/engine.hpp"
#include "mpsim/policies.hpp"
#include "support/oracle.hpp"

using namespace mpsim;
using doctest::Approx;

namespace {

// Pin every transfer to one interface; enough policy for engine-level tests.
struct FixedPolicy : Policy {
  int iface;
  explicit FixedPolicy(int k) : iface(k) {}
  PolicyDecision decide(const SimulationState& view, PolicyScratch&,
                        int transfer_index) override {
    const std::uint64_t id = find_reusable_connection(
        view, view.spec_of(transfer_index).host, iface);
    if (id != 0) return PolicyDecision::reuse(id);
    if (can_open_connection(view, view.spec_of(transfer_index).host))
      return PolicyDecision::tcp(iface);
    return PolicyDecision::postpone();
  }
};

SimResult run_if1(const WorkloadPage& page, const NetworkScenario& scenario,
                  const SimConfig& cfg = {}, std::ostream* trace = nullptr) {
  FixedPolicy p(0);
  return run_with_policy(page, scenario, p, cfg, trace);
}

// A connection inserted directly into the state, bypassing the event
// machinery, so queries can be tested against hand-set fields.
std::uint64_t plant_conn(SimulationState& st, const std::string& host,
                         int iface, ConnPhase phase) {
  ConnectionState c;
  c.id = st.next_conn_id++;
  c.host = host;
  c.phase = phase;
  SubflowState f;
  f.iface = iface;
  f.join_complete_at = 0.0;
  c.subflows.push_back(f);
  st.conns.push_back(std::move(c));
  return st.conns.back().id;
}

const TransferTiming& timing_of(const SimResult& r, const std::string& id) {
  for (const TransferTiming& t : r.transfers)
    if (t.id == id) return t;
  REQUIRE(false);
  return r.transfers.front();
}

}  // namespace

TEST_CASE("setup latency: new, reused, and TLS round trips") {
  const SimConfig cfg;
  CHECK(transfer_setup_latency(false, false, 0.05, cfg) == 0.1);
  CHECK(transfer_setup_latency(true, false, 0.05, cfg) == 0.05);
  CHECK(transfer_setup_latency(false, true, 0.05, cfg) == 0.2);
  // Reused connections have their TLS session already.
  CHECK(transfer_setup_latency(true, true, 0.05, cfg) == 0.05);
}

TEST_CASE("slow-start rate doubles per round and caps at the share") {
  const SimConfig cfg;
  auto [r0, exit0] = slow_start_rate(0, 0.1, 1.25e6, cfg);
  CHECK(r0 == 146000.0);
  CHECK_FALSE(exit0);

  auto [r4, exit4] = slow_start_rate(4, 0.1, 1.25e6, cfg);
  CHECK(r4 == 1.25e6);
  CHECK(exit4);

  auto [rs, exits] = slow_start_rate(0, 0.01, 62500.0, cfg);
  CHECK(rs == 62500.0);
  CHECK(exits);

  // Equality at the boundary counts as reaching the share.
  auto [rb, exitb] = slow_start_rate(0, 0.1, 146000.0, cfg);
  CHECK(rb == 146000.0);
  CHECK(exitb);
}

TEST_CASE("single transfer matches the hand-summed slow-start rounds") {
  const SimConfig cfg;

  SUBCASE("14,600 B fits in round zero: 0.300 s") {
    const SimResult r = run_if1(testsup::one_transfer_page(14600),
                                testsup::one_iface(100, 10e6), cfg);
    CHECK(r.page_load_time == Approx(0.300).epsilon(1e-9));
  }
  SUBCASE("zero bytes cost exactly the setup") {
    const SimResult r = run_if1(testsup::one_transfer_page(0),
                                testsup::one_iface(100, 10e6), cfg);
    CHECK(r.page_load_time == 0.2);
  }
  SUBCASE("1 MB: four capped rounds then line rate, 1.2248 s") {
    const SimResult r = run_if1(testsup::one_transfer_page(1000000),
                                testsup::one_iface(100, 10e6), cfg);
    CHECK(r.page_load_time == Approx(1.2248).epsilon(1e-9));
  }
  SUBCASE("TLS adds two more round trips before the payload") {
    const SimResult r = run_if1(testsup::one_transfer_page(14600, true),
                                testsup::one_iface(100, 10e6), cfg);
    CHECK(r.page_load_time == Approx(0.500).epsilon(1e-9));
  }
  SUBCASE("closed form oracle agrees across sizes and links") {
    for (const std::int64_t size :
         {std::int64_t{0}, std::int64_t{1460}, std::int64_t{14600},
          std::int64_t{250000}, std::int64_t{1000000}, std::int64_t{5000000}})
      for (const double rtt : {10.0, 50.0, 200.0})
        for (const double bw : {0.5e6, 6e6, 50e6})
          for (const bool tls : {false, true}) {
            const SimResult r = run_if1(testsup::one_transfer_page(size, tls),
                                        testsup::one_iface(rtt, bw), cfg);
            const double want = testsup::single_transfer_plt(
                size, rtt / 1000.0, bw / 8.0, tls, cfg);
            CHECK(r.page_load_time == Approx(want).epsilon(1e-9));
          }
  }
}

TEST_CASE("fair shares: equal split, slow-start caps, water-filled surplus") {
  const WorkloadPage page = testsup::one_transfer_page(1000);
  SimulationState st =
      init_state(page, testsup::one_iface(100, 10e6), SimConfig{});

  auto receiving = [&](std::uint64_t id, bool in_slow_start, int round) {
    ConnectionState& c = st.conn(id);
    c.phase = ConnPhase::receiving;
    c.remaining_bytes = 1e9;
    c.subflows[0].draining = true;
    c.subflows[0].slow_start_active = in_slow_start;
    c.subflows[0].ss_round = round;
  };

  const std::uint64_t a = plant_conn(st, "h", 0, ConnPhase::receiving);
  receiving(a, false, 0);

  SUBCASE("sole flow takes the whole link") {
    const auto rates = recompute_fair_shares(st, 0);
    REQUIRE(rates.size() == 1);
    CHECK(rates[0].rate == 1.25e6);
    CHECK(st.conn(a).subflows[0].rate == 1.25e6);
  }
  SUBCASE("two unconstrained flows split evenly") {
    const std::uint64_t b = plant_conn(st, "h", 0, ConnPhase::receiving);
    receiving(b, false, 0);
    const auto rates = recompute_fair_shares(st, 0);
    REQUIRE(rates.size() == 2);
    CHECK(rates[0].rate == 625000.0);
    CHECK(rates[1].rate == 625000.0);
  }
  SUBCASE("slow-start cap frees surplus for the other flow") {
    const std::uint64_t x = plant_conn(st, "h", 0, ConnPhase::receiving);
    receiving(x, true, 0);  // cwnd-limited at 146,000 B/s
    const auto rates = recompute_fair_shares(st, 0);
    REQUIRE(rates.size() == 2);
    CHECK(st.conn(x).subflows[0].rate == 146000.0);
    CHECK(st.conn(a).subflows[0].rate == 1104000.0);
    CHECK(st.conn(x).subflows[0].slow_start_active);
  }
  SUBCASE("surplus splits across all unconstrained flows") {
    const std::uint64_t b = plant_conn(st, "h", 0, ConnPhase::receiving);
    receiving(b, false, 0);
    const std::uint64_t x = plant_conn(st, "h", 0, ConnPhase::receiving);
    receiving(x, true, 0);
    recompute_fair_shares(st, 0);
    CHECK(st.conn(x).subflows[0].rate == 146000.0);
    CHECK(st.conn(a).subflows[0].rate == 552000.0);
    CHECK(st.conn(b).subflows[0].rate == 552000.0);
  }
  SUBCASE("a window that reaches the share leaves slow start for good") {
    st.conn(a).subflows[0].slow_start_active = true;
    st.conn(a).subflows[0].ss_round = 4;  // 2,336,000 B/s uncapped
    recompute_fair_shares(st, 0);
    CHECK(st.conn(a).subflows[0].rate == 1.25e6);
    CHECK_FALSE(st.conn(a).subflows[0].slow_start_active);
  }
}

TEST_CASE("connection reuse rules") {
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"A", 1000, "h", false, {}});
  page.transfers.push_back({"B", 1000, "h", false, {}});
  SimConfig cfg;
  SimulationState st = init_state(page, testsup::one_iface(100, 10e6), cfg);
  // window for reuse-ahead: clock + new_conn_rtts * rtt = 0.2

  SUBCASE("idle matching connection is picked") {
    const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::idle);
    CHECK(find_reusable_connection(st, "h", 0) == id);
  }
  SUBCASE("host mismatch disqualifies") {
    plant_conn(st, "other", 0, ConnPhase::idle);
    CHECK(find_reusable_connection(st, "h", 0) == 0);
  }
  SUBCASE("interface mismatch disqualifies") {
    plant_conn(st, "h", 0, ConnPhase::idle);
    CHECK(find_reusable_connection(st, "h", 1) == 0);
  }
  SUBCASE("busy connection due within the setup bound is picked") {
    const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::receiving);
    ConnectionState& c = st.conn(id);
    c.assigned_transfer = 0;
    c.remaining_bytes = 100;
    c.subflows[0].draining = true;
    c.expected_completion = 0.15;  // <= 0.2 bound
    CHECK(predicted_idle_time(st, c) == 0.15);
    CHECK(find_reusable_connection(st, "h", 0) == id);
  }
  SUBCASE("busy connection due after the bound is not") {
    const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::receiving);
    ConnectionState& c = st.conn(id);
    c.assigned_transfer = 0;
    c.remaining_bytes = 100;
    c.subflows[0].draining = true;
    c.expected_completion = 0.3;  // 3 RTT > 2 RTT setup bound
    CHECK(find_reusable_connection(st, "h", 0) == 0);
  }
  SUBCASE("an occupied queue slot blocks reuse-ahead") {
    const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::receiving);
    ConnectionState& c = st.conn(id);
    c.assigned_transfer = 0;
    c.queued_transfer = 1;
    c.expected_completion = 0.15;
    CHECK(predicted_idle_time(st, c) == kInf);
    CHECK(find_reusable_connection(st, "h", 0) == 0);
  }
  SUBCASE("handshaking and closed connections never qualify") {
    plant_conn(st, "h", 0, ConnPhase::handshaking);
    plant_conn(st, "h", 0, ConnPhase::closed);
    CHECK(find_reusable_connection(st, "h", 0) == 0);
  }
  SUBCASE("idle beats busy, then lowest id wins") {
    const std::uint64_t busy = plant_conn(st, "h", 0, ConnPhase::receiving);
    ConnectionState& c = st.conn(busy);
    c.assigned_transfer = 0;
    c.expected_completion = 0.05;
    const std::uint64_t idle1 = plant_conn(st, "h", 0, ConnPhase::idle);
    plant_conn(st, "h", 0, ConnPhase::idle);
    CHECK(find_reusable_connection(st, "h", 0) == idle1);
  }
}

TEST_CASE("connection limits gate opening, not reuse") {
  WorkloadPage page = testsup::one_transfer_page(1000);
  SimConfig cfg;
  SimulationState st = init_state(page, testsup::two_iface(10, 1e6, 20, 1e6), cfg);

  for (int i = 0; i < 5; ++i) plant_conn(st, "h", 0, ConnPhase::idle);
  CHECK(can_open_connection(st, "h"));
  CHECK(open_connection(st, "h", {0}, 0, false).has_value());  // the 6th
  CHECK_FALSE(can_open_connection(st, "h"));
  CHECK_FALSE(open_connection(st, "h", {0}, 0, false).has_value());

  // 6 to h already; fill to the 17-connection global cap with other hosts.
  for (int i = 0; i < 6; ++i) plant_conn(st, "g", 0, ConnPhase::idle);
  for (int i = 0; i < 5; ++i) plant_conn(st, "k", 0, ConnPhase::idle);
  CHECK_FALSE(can_open_connection(st, "fresh-host"));
  CHECK_FALSE(open_connection(st, "fresh-host", {0}, 0, false).has_value());

  // Closing one frees both the per-server and the global slot.
  st.conn(1).phase = ConnPhase::closed;
  CHECK(can_open_connection(st, "fresh-host"));
}

TEST_CASE("mptcp connections: join schedule and aggregate rate") {
  WorkloadPage page = testsup::one_transfer_page(1000);
  SimConfig cfg;
  SimulationState st =
      init_state(page, testsup::two_iface(20, 20e6, 50, 5e6), cfg);

  const auto id = open_connection(st, "h", {0, 1}, 0, true);
  REQUIRE(id.has_value());
  ConnectionState& c = st.conn(*id);
  REQUIRE(c.subflows.size() == 2);
  CHECK(c.mptcp);
  // Initial subflow joins with its handshake; the secondary one subflow-RTT
  // after that.
  CHECK(c.subflows[0].join_complete_at == Approx(0.02).epsilon(1e-12));
  CHECK(c.subflows[1].join_complete_at == Approx(0.07).epsilon(1e-12));

  c.subflows[0].draining = true;
  c.subflows[0].rate = 2.5e6;
  c.subflows[1].draining = true;
  c.subflows[1].rate = 625000.0;
  CHECK(mptcp_aggregate_rate(c, 0.1) == 3.125e6);
  CHECK(mptcp_aggregate_rate(c, 0.05) == 2.5e6);  // second not joined yet
  c.subflows[1].draining = false;
  CHECK(mptcp_aggregate_rate(c, 0.1) == 2.5e6);
}

TEST_CASE("completion prediction equals the closed-form examples") {
  const SimConfig cfg;

  SUBCASE("small transfer, slow link: share-capped round zero") {
    const WorkloadPage page = testsup::one_transfer_page(1000);
    SimulationState st = init_state(page, testsup::one_iface(10, 0.5e6), cfg);
    const double t = predict_completion(st, 0, PolicyDecision::tcp(0));
    CHECK(t == Approx(0.036).epsilon(1e-9));
  }
  SUBCASE("small transfer, fat link: window-capped round zero") {
    const WorkloadPage page = testsup::one_transfer_page(1000);
    SimulationState st = init_state(page, testsup::one_iface(200, 50e6), cfg);
    const double t = predict_completion(st, 0, PolicyDecision::tcp(0));
    CHECK(t == Approx(0.41369863).epsilon(1e-8));
  }
  SUBCASE("reusing an idle connection costs one request round trip") {
    WorkloadPage page = testsup::one_transfer_page(0);
    SimulationState st = init_state(page, testsup::one_iface(10, 10e6), cfg);
    const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::idle);
    const double t = predict_completion(st, 0, PolicyDecision::reuse(id));
    CHECK(t == Approx(0.010).epsilon(1e-9));
  }
}

TEST_CASE("prediction is sound and leaves the live state untouched") {
  const SimConfig cfg;
  const WorkloadPage page = testsup::one_transfer_page(123456);
  const NetworkScenario scen = testsup::two_iface(30, 12e6, 100, 2e6);

  SimulationState st = init_state(page, scen, cfg);
  const std::string before = testsup::fingerprint(st);
  const double pred0 = predict_completion(st, 0, PolicyDecision::tcp(0));
  const double pred1 = predict_completion(st, 0, PolicyDecision::tcp(1));
  CHECK(testsup::fingerprint(st) == before);

  // With a single transfer the prediction is the simulation, bit for bit.
  FixedPolicy p0(0), p1(1);
  CHECK(run_with_policy(page, scen, p0, cfg).page_load_time == pred0);
  CHECK(run_with_policy(page, scen, p1, cfg).page_load_time == pred1);
}

TEST_CASE("idle connections close after the timeout") {
  WorkloadPage page = testsup::one_transfer_page(1000);
  SimConfig cfg;
  SimulationState st = init_state(page, testsup::one_iface(10, 10e6), cfg);
  const std::uint64_t id = plant_conn(st, "h", 0, ConnPhase::idle);
  st.conn(id).idle_since = 0.0;

  SUBCASE("just before the deadline nothing happens") {
    st.clock = 29.999;
    CHECK(close_idle_connections(st) == 0);
    CHECK(st.conn(id).open());
  }
  SUBCASE("at the deadline the connection closes") {
    st.clock = 30.0;
    CHECK(close_idle_connections(st) == 1);
    CHECK_FALSE(st.conn(id).open());
    CHECK(close_idle_connections(st) == 0);  // idempotent
  }
}

TEST_CASE("postponed transfers retry in arrival order when slots free up") {
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"T0", 0, "h", false, {}});
  page.transfers.push_back({"T1", 0, "h", false, {}});
  SimConfig cfg;
  cfg.max_conns_per_server = 1;
  const SimResult r = run_if1(page, testsup::one_iface(50, 10e6), cfg);

  const TransferTiming& t0 = timing_of(r, "T0");
  const TransferTiming& t1 = timing_of(r, "T1");
  CHECK(t0.end_s == Approx(0.1).epsilon(1e-12));
  CHECK_FALSE(t0.reused);
  // T1 was postponed at time 0, retried at T0's completion, and reused the
  // now-idle connection: one request round trip.
  CHECK(t1.reused);
  CHECK(t1.conn_id == t0.conn_id);
  CHECK(t1.start_s == Approx(0.1).epsilon(1e-12));
  CHECK(t1.end_s == Approx(0.15).epsilon(1e-12));
  CHECK(r.page_load_time == Approx(0.15).epsilon(1e-12));
}

TEST_CASE("a reused connection keeps its TLS session") {
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"A", 0, "h", true, {}});
  page.transfers.push_back({"B", 0, "h", true, {"A"}});
  const SimResult r = run_if1(page, testsup::one_iface(100, 10e6));
  // A: 2 RTT connect + 2 RTT TLS; B rides the same session for 1 RTT.
  CHECK(timing_of(r, "A").end_s == Approx(0.4).epsilon(1e-12));
  CHECK(timing_of(r, "B").reused);
  CHECK(r.page_load_time == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pipelining lets a queued transfer start at the completion instant") {
  // A(0 B) then B reuses; C on another host finishes while B drains, so D is
  // queued behind B. Without pipelining D pays one request RTT after B; with
  // it, D's bytes flow immediately.
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"A", 0, "h", false, {}});
  page.transfers.push_back({"B", 14600, "h", false, {"A"}});
  page.transfers.push_back({"C", 29200, "g", false, {}});
  page.transfers.push_back({"D", 1460, "h", false, {"C"}});
  const NetworkScenario scen = testsup::one_iface(50, 20e6);
  SimConfig cfg;
  cfg.max_conns_per_server = 1;

  const SimResult off = run_if1(page, scen, cfg);
  cfg.pipelining = true;
  const SimResult on = run_if1(page, scen, cfg);

  CHECK(timing_of(off, "D").end_s == Approx(0.2525).epsilon(1e-9));
  CHECK(timing_of(on, "D").end_s == Approx(0.2025).epsilon(1e-9));
  CHECK(timing_of(off, "D").end_s - timing_of(on, "D").end_s ==
        Approx(0.05).epsilon(1e-9));
  CHECK(timing_of(on, "D").reused);
}

TEST_CASE("a 30 second gap closes the pool and forces a fresh handshake") {
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"T0", 0, "h", false, {}});
  page.transfers.push_back({"T1", 80000000, "g", false, {}});
  page.transfers.push_back({"T2", 1460, "h", false, {"T1"}});
  const NetworkScenario scen = testsup::one_iface(50, 20e6);

  SimConfig cfg;  // 30 s timeout: T1 ends at ~32.2 s, so T0's pool is gone
  const SimResult closed = run_if1(page, scen, cfg);
  CHECK_FALSE(timing_of(closed, "T2").reused);
  CHECK(timing_of(closed, "T2").end_s -
            timing_of(closed, "T2").start_s ==
        Approx(0.1 + 1460.0 / 292000.0).epsilon(1e-9));

  cfg.idle_timeout = 60.0;  // now the idle connection survives the gap
  const SimResult kept = run_if1(page, scen, cfg);
  CHECK(timing_of(kept, "T2").reused);
  CHECK(timing_of(kept, "T2").end_s - timing_of(kept, "T2").start_s ==
        Approx(0.05 + 1460.0 / 292000.0).epsilon(1e-9));
}

TEST_CASE("run rejects invalid pages and scenarios up front") {
  FixedPolicy p(0);
  const SimConfig cfg;
  WorkloadPage cyclic{"p",
                      {{"A", 1, "h", false, {"B"}}, {"B", 1, "h", false, {"A"}}}};
  try {
    run_with_policy(cyclic, testsup::one_iface(10, 1e6), p, cfg);
    CHECK(false);
  } catch (const InvalidInputError& e) {
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }

  const WorkloadPage ok = testsup::one_transfer_page(10);
  CHECK_THROWS_AS(run_with_policy(ok, testsup::one_iface(10, 0), p, cfg),
                  InvalidInputError);
  NetworkScenario three{{{"a", 1, 1e6}, {"b", 1, 1e6}, {"c", 1, 1e6}}};
  CHECK_THROWS_AS(run_with_policy(ok, three, p, cfg), InvalidInputError);
}

TEST_CASE("causality holds on a dependency chain") {
  WorkloadPage page;
  page.name = "p";
  page.transfers.push_back({"root", 10240, "host0", false, {}});
  for (int i = 0; i < 8; ++i)
    page.transfers.push_back(
        {"obj" + std::to_string(i), 20000 + 1000 * i,
         "host" + std::to_string(i % 3), false, {"root"}});
  page.transfers.push_back({"leaf", 1000, "host0", false, {"obj0", "obj7"}});

  const SimResult r = run_if1(page, testsup::one_iface(50, 10e6));
  for (const TransferSpec& t : page.transfers)
    for (const std::string& d : t.deps)
      CHECK(timing_of(r, t.id).start_s >= timing_of(r, d).end_s);
  CHECK(r.page_load_time == timing_of(r, "leaf").end_s);
}

TEST_CASE("event trace is tab-separated and time-ordered") {
  std::ostringstream trace;
  const SimResult r = run_if1(testsup::one_transfer_page(1000000),
                              testsup::one_iface(100, 10e6), SimConfig{},
                              &trace);
  std::istringstream in(trace.str());
  std::string line;
  std::uint64_t lines = 0;
  double last = 0.0;
  while (std::getline(in, line)) {
    ++lines;
    const std::size_t tab1 = line.find('\t');
    REQUIRE(tab1 != std::string::npos);
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    REQUIRE(tab2 != std::string::npos);
    const double t = std::stod(line.substr(0, tab1));
    CHECK(t >= last);
    last = t;
  }
  CHECK(lines == r.events_processed);
  CHECK(lines > 0);
}

TEST_CASE("identical inputs give byte-identical results") {
  std::mt19937_64 rng(42);
  const WorkloadPage page = testsup::random_page(rng, 60);
  const NetworkScenario scen = testsup::two_iface(20, 6e6, 70, 13e6);
  SimConfig cfg;
  cfg.rng_seed = 7;
  FixedPolicy p(0);
  const std::string a = to_json(run_with_policy(page, scen, p, cfg));
  const std::string b = to_json(run_with_policy(page, scen, p, cfg));
  CHECK(a == b);
}
