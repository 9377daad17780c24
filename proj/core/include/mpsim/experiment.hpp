#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mpsim/model.hpp"

namespace mpsim {

// Factor levels of the full factorial: every combination of page, policy and
// the two interfaces' RTT/bandwidth becomes one run.
struct FactorLevels {
  std::vector<std::string> pages;
  std::vector<PolicyKind> policies;
  std::vector<double> if1_rtt_ms;
  std::vector<double> if1_bw_bps;
  std::vector<double> if2_rtt_ms;
  std::vector<double> if2_bw_bps;
};

struct RunSpec {
  std::string page;
  PolicyKind policy;
  double if1_rtt_ms = 0;
  double if1_bw_bps = 0;
  double if2_rtt_ms = 0;
  double if2_bw_bps = 0;

  NetworkScenario scenario() const;
  // Stable textual identity; feeds the per-run seed and error messages.
  std::string descriptor() const;

  bool operator==(const RunSpec&) const = default;
};

struct RunRecord {
  RunSpec spec;
  double plt_s = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

struct SpeedupRecord {
  RunRecord run;
  double speedup = 1.0;
  std::string category;
};

// Cartesian product in lexicographic order (page, policy, if1 rtt, if1 bw,
// if2 rtt, if2 bw). Every factor needs at least one level.
std::vector<RunSpec> build_design(const FactorLevels& levels);

// Runs the whole design. Each run gets rng_seed = stable hash(config seed,
// descriptor), so results do not depend on `parallelism` or run order.
// Failures are captured per run in `status`, never thrown.
std::vector<RunRecord> run_design(
    const std::vector<RunSpec>& design,
    const std::map<std::string, WorkloadPage>& pages, const SimConfig& config,
    int parallelism);

// Page load time of the Interface-1 policy on the same page and network
// tuple, divided by the run's own. Requires an ok if1 record per (page,
// tuple); throws MissingBaselineError otherwise. Error runs are skipped.
std::vector<SpeedupRecord> compute_speedups(
    const std::vector<RunRecord>& records);

// Five bins: slower (<1), equal (within 1e-6 of 1), up_to_2x, 2_to_5x,
// over_5x.
std::string speedup_category(double speedup);

// Writes runs.csv, speedups.csv, one ecdf_<policy>.csv per policy, and
// category_by_factor.csv into out_dir (created if needed).
void emit_reports(const std::vector<RunRecord>& records,
                  const std::vector<SpeedupRecord>& speedups,
                  const std::string& out_dir);

// Just the derived tables (ECDFs and the category cross tab); what the
// report command regenerates from an existing speedups.csv.
void emit_analysis_reports(const std::vector<SpeedupRecord>& speedups,
                           const std::string& out_dir);

std::string speedups_to_csv(const std::vector<SpeedupRecord>& speedups);
std::vector<SpeedupRecord> speedups_from_csv(const std::string& text);

std::uint64_t derive_run_seed(std::uint64_t global_seed,
                              const std::string& descriptor);

// symmetric | asymmetric | highly-asym, the three two-interface shaper
// setups used for handcrafted workloads.
NetworkScenario preset_scenario(const std::string& name);
std::vector<std::string> preset_names();

// All seven policies and the published RTT/bandwidth grid.
FactorLevels default_factor_levels(std::vector<std::string> pages);

// Overrides of the default levels: {"policies": [...], "if1_rtt_ms": [...],
// "if1_bw_bps": [...], "if2_rtt_ms": [...], "if2_bw_bps": [...]}, each
// optional.
FactorLevels factor_levels_from_json(const std::string& text,
                                     std::vector<std::string> pages);

}  // namespace mpsim
