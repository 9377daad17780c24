#include "cli_app.hpp"

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "mpsim/experiment.hpp"
#include "mpsim/model.hpp"
#include "mpsim/policies.hpp"
#include "mpsim/workload.hpp"

namespace mpsim {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& body) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write '" + path + "'");
  out << body;
  if (!out.good()) throw InvalidInputError("short write to '" + path + "'");
}

// --config beats the MPSIM_CONFIG environment variable beats built-in
// defaults; an explicit --seed overrides whatever the config file says.
SimConfig load_config(const std::string& config_path, bool seed_given,
                      std::uint64_t seed) {
  std::string path = config_path;
  if (path.empty()) {
    const char* env = std::getenv("MPSIM_CONFIG");
    if (env != nullptr && *env != '\0') path = env;
  }
  SimConfig config;
  if (!path.empty()) config = config_from_json(read_file(path));
  if (seed_given) config.rng_seed = seed;
  return config;
}

struct SimulateArgs {
  std::string page_path;
  std::string scenario_path;
  std::string preset;
  std::string policy = "eaf";
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool trace = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const WorkloadPage page = page_from_json(read_file(a.page_path));
  if (a.scenario_path.empty() && a.preset.empty())
    throw InvalidInputError("simulate needs --scenario or --preset");
  const NetworkScenario scenario = a.preset.empty()
                                       ? scenario_from_json(read_file(a.scenario_path))
                                       : preset_scenario(a.preset);
  const PolicyKind policy = parse_policy_name(a.policy);
  const SimConfig config = load_config(a.config_path, a.seed_given, a.seed);

  const SimResult res = run_simulation(page, scenario, policy, config,
                                       a.trace ? &err : nullptr);

  out << "plt_s " << format_number(res.page_load_time) << "\n";
  out << "id\tstart_s\tend_s\tconn\treused\tinterfaces\n";
  for (const TransferTiming& t : res.transfers) {
    std::string ifaces;
    for (const int k : t.interfaces) {
      if (!ifaces.empty()) ifaces += '+';
      ifaces += scenario.interfaces[static_cast<std::size_t>(k)].name;
    }
    out << t.id << '\t' << format_number(t.start_s) << '\t'
        << format_number(t.end_s) << '\t' << t.conn_id << '\t'
        << (t.reused ? 1 : 0) << '\t' << ifaces << '\n';
  }
  return 0;
}

struct ExperimentArgs {
  std::vector<std::string> pages;
  std::string levels_path;
  std::string out_dir;
  std::string config_path;
  int parallel = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  std::map<std::string, WorkloadPage> pages;
  std::vector<std::string> names;
  auto load_page = [&](const std::filesystem::path& path) {
    WorkloadPage page = page_from_json(read_file(path.string()));
    if (pages.count(page.name))
      throw InvalidInputError("duplicate page name '" + page.name + "' (" +
                              path.string() + ")");
    names.push_back(page.name);
    pages.emplace(page.name, std::move(page));
  };
  for (const std::string& arg : a.pages) {
    const std::filesystem::path path(arg);
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> found;
      for (const auto& entry : std::filesystem::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
          found.push_back(entry.path());
      std::sort(found.begin(), found.end());
      for (const auto& p : found) load_page(p);
    } else {
      load_page(path);
    }
  }
  if (names.empty()) throw InvalidInputError("no page files found");

  const FactorLevels levels =
      a.levels_path.empty()
          ? default_factor_levels(names)
          : factor_levels_from_json(read_file(a.levels_path), names);
  const std::vector<RunSpec> design = build_design(levels);
  const SimConfig config = load_config(a.config_path, a.seed_given, a.seed);

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RunRecord> records =
      run_design(design, pages, config, a.parallel);
  const std::vector<SpeedupRecord> speedups = compute_speedups(records);
  emit_reports(records, speedups, a.out_dir);
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  std::size_t failed = 0;
  for (const RunRecord& r : records)
    if (!r.ok()) ++failed;
  out << "runs " << records.size() << "\n";
  out << "failed " << failed << "\n";
  out << "wall_s " << format_number(wall_s) << "\n";
  return 0;
}

struct IngestArgs {
  std::string har_path;
  std::string out_path;
  double epsilon_ms = 1.0;
  std::string name = "har-page";
};

int cmd_ingest_har(const IngestArgs& a, std::ostream& out) {
  const std::vector<HarEntry> entries = parse_har(read_file(a.har_path));
  const WorkloadPage page = derive_dependencies(entries, a.epsilon_ms, a.name);
  write_file(a.out_path, to_json(page));
  std::size_t edges = 0;
  for (const TransferSpec& t : page.transfers) edges += t.deps.size();
  out << "transfers " << page.transfers.size() << "\n";
  out << "edges " << edges << "\n";
  return 0;
}

struct GenArgs {
  std::string objects;
  int hosts = 1;
  bool tls = false;
  std::uint64_t seed = 0;
  std::string name;
  std::string out_path;
};

int cmd_gen_workload(const GenArgs& a, std::ostream& out) {
  SyntheticSpec spec = parse_synthetic_groups(a.objects);
  spec.host_count = a.hosts;
  spec.tls = a.tls;
  WorkloadPage page = generate_synthetic(spec, a.seed);
  if (!a.name.empty()) page.name = a.name;
  write_file(a.out_path, to_json(page));
  out << "transfers " << page.transfers.size() << "\n";
  return 0;
}

struct ReportArgs {
  std::string speedups_path;
  std::string out_dir;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const std::vector<SpeedupRecord> speedups =
      speedups_from_csv(read_file(a.speedups_path));
  if (speedups.empty())
    throw InvalidInputError("'" + a.speedups_path + "' has no data rows");
  emit_analysis_reports(speedups, a.out_dir);
  out << "records " << speedups.size() << "\n";
  return 0;
}

std::string policy_help() {
  std::string help = "Path selection policy:";
  for (const std::string& name : known_policy_names()) help += " " + name;
  return help;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Flow-level page download simulator for multi-access networks"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Replay one page over a network scenario");
  simulate->add_option("--page", sim.page_path, "Page workload JSON file")
      ->required();
  CLI::Option* scen_opt =
      simulate->add_option("--scenario", sim.scenario_path,
                           "Network scenario JSON file");
  CLI::Option* preset_opt = simulate->add_option(
      "--preset", sim.preset,
      "Built-in scenario: symmetric, asymmetric, highly-asym");
  scen_opt->excludes(preset_opt);
  simulate->add_option("--policy", sim.policy, policy_help());
  simulate->add_option("--config", sim.config_path, "Simulator config JSON");
  CLI::Option* sim_seed = simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_flag("--trace", sim.trace,
                     "Emit a per-event trace on standard error");

  ExperimentArgs exp;
  CLI::App* experiment = app.add_subcommand(
      "experiment", "Run a factorial design and write CSV reports");
  experiment
      ->add_option("--pages", exp.pages,
                   "Page JSON files or directories of them")
      ->required()
      ->expected(-1);
  experiment->add_option("--levels", exp.levels_path,
                         "Factor levels JSON (defaults to the full grid)");
  experiment->add_option("--out", exp.out_dir, "Output directory")->required();
  experiment->add_option("--parallel", exp.parallel,
                         "Worker threads (0 = all cores)");
  CLI::Option* exp_seed =
      experiment->add_option("--seed", exp.seed, "Global RNG seed");
  experiment->add_option("--config", exp.config_path,
                         "Simulator config JSON");

  IngestArgs ing;
  CLI::App* ingest = app.add_subcommand(
      "ingest-har", "Convert a HAR capture into a page workload file");
  ingest->add_option("--har", ing.har_path, "HAR 1.2 JSON file")->required();
  ingest->add_option("--out", ing.out_path, "Output page JSON")->required();
  ingest->add_option("--epsilon-ms", ing.epsilon_ms,
                     "Slack when deriving dependencies (milliseconds)");
  ingest->add_option("--name", ing.name, "Page name for the output");

  GenArgs gen;
  CLI::App* genw = app.add_subcommand(
      "gen-workload", "Generate a synthetic page workload file");
  genw->add_option("--objects", gen.objects,
                   "Object groups, e.g. 16x1KB+8x10KB+4x100KB")
      ->required();
  genw->add_option("--hosts", gen.hosts, "Number of distinct hosts");
  genw->add_flag("--tls", gen.tls, "Serve every object over TLS");
  genw->add_option("--seed", gen.seed, "RNG seed");
  genw->add_option("--name", gen.name, "Page name override");
  genw->add_option("--out", gen.out_path, "Output page JSON")->required();

  ReportArgs rep;
  CLI::App* report = app.add_subcommand(
      "report", "Rebuild analysis tables from an existing speedups.csv");
  report->add_option("--speedups", rep.speedups_path, "speedups.csv file")
      ->required();
  report->add_option("--out", rep.out_dir, "Output directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("mpsim");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    sim.seed_given = sim_seed->count() > 0;
    exp.seed_given = exp_seed->count() > 0;
    if (app.got_subcommand(simulate)) return cmd_simulate(sim, out, err);
    if (app.got_subcommand(experiment)) return cmd_experiment(exp, out);
    if (app.got_subcommand(ingest)) return cmd_ingest_har(ing, out);
    if (app.got_subcommand(genw)) return cmd_gen_workload(gen, out);
    if (app.got_subcommand(report)) return cmd_report(rep, out);
    err << "error: no subcommand given\n";
    return 2;
  } catch (const InvalidInputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingBaselineError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mpsim
