#include "mpsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "mpsim/policies.hpp"

namespace mpsim {

NetworkScenario RunSpec::scenario() const {
  NetworkScenario s;
  s.interfaces.push_back(InterfaceSpec{"if1", if1_rtt_ms, if1_bw_bps});
  s.interfaces.push_back(InterfaceSpec{"if2", if2_rtt_ms, if2_bw_bps});
  return s;
}

std::string RunSpec::descriptor() const {
  std::string d = "page=" + page + ";policy=" + policy_name(policy);
  d += ";if1_rtt_ms=" + format_number(if1_rtt_ms);
  d += ";if1_bw_bps=" + format_number(if1_bw_bps);
  d += ";if2_rtt_ms=" + format_number(if2_rtt_ms);
  d += ";if2_bw_bps=" + format_number(if2_bw_bps);
  return d;
}

std::vector<RunSpec> build_design(const FactorLevels& levels) {
  auto require = [](bool nonempty, const char* what) {
    if (!nonempty)
      throw InvalidInputError(std::string("factor '") + what +
                              "' has no levels");
  };
  require(!levels.pages.empty(), "pages");
  require(!levels.policies.empty(), "policies");
  require(!levels.if1_rtt_ms.empty(), "if1_rtt_ms");
  require(!levels.if1_bw_bps.empty(), "if1_bw_bps");
  require(!levels.if2_rtt_ms.empty(), "if2_rtt_ms");
  require(!levels.if2_bw_bps.empty(), "if2_bw_bps");

  std::vector<RunSpec> design;
  for (const std::string& page : levels.pages)
    for (const PolicyKind& policy : levels.policies)
      for (const double r1 : levels.if1_rtt_ms)
        for (const double b1 : levels.if1_bw_bps)
          for (const double r2 : levels.if2_rtt_ms)
            for (const double b2 : levels.if2_bw_bps)
              design.push_back(RunSpec{page, policy, r1, b1, r2, b2});
  return design;
}

std::uint64_t derive_run_seed(std::uint64_t global_seed,
                              const std::string& descriptor) {
  // FNV-1a over the seed bytes then the descriptor.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < 8; ++i)
    mix(static_cast<unsigned char>(global_seed >> (8 * i)));
  for (const char c : descriptor) mix(static_cast<unsigned char>(c));
  return h;
}

namespace {

std::string sanitize_status(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  if (s.size() > 200) s.resize(200);
  return s;
}

}  // namespace

std::vector<RunRecord> run_design(
    const std::vector<RunSpec>& design,
    const std::map<std::string, WorkloadPage>& pages, const SimConfig& config,
    int parallelism) {
  for (const RunSpec& spec : design)
    if (!pages.count(spec.page))
      throw InvalidInputError("design references unknown page '" + spec.page +
                              "'");

  std::vector<RunRecord> records(design.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= design.size()) return;
      const RunSpec& spec = design[i];
      RunRecord rec;
      rec.spec = spec;
      SimConfig run_config = config;
      run_config.rng_seed =
          derive_run_seed(config.rng_seed, spec.descriptor());
      try {
        const SimResult res = run_simulation(
            pages.at(spec.page), spec.scenario(), spec.policy, run_config);
        rec.plt_s = res.page_load_time;
        rec.status = "ok";
      } catch (const std::exception& e) {
        rec.plt_s = 0.0;
        rec.status = sanitize_status(std::string("error: ") + e.what());
      }
      records[i] = std::move(rec);
    }
  };

  int threads = parallelism;
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min<int>(threads, static_cast<int>(design.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return records;
}

std::string speedup_category(double speedup) {
  if (std::fabs(speedup - 1.0) <= 1e-6) return "equal";
  if (speedup < 1.0) return "slower";
  if (speedup <= 2.0) return "up_to_2x";
  if (speedup <= 5.0) return "2_to_5x";
  return "over_5x";
}

namespace {

std::string tuple_key(const RunSpec& spec) {
  return spec.page + "|" + format_number(spec.if1_rtt_ms) + "|" +
         format_number(spec.if1_bw_bps) + "|" + format_number(spec.if2_rtt_ms) +
         "|" + format_number(spec.if2_bw_bps);
}

}  // namespace

std::vector<SpeedupRecord> compute_speedups(
    const std::vector<RunRecord>& records) {
  const PolicyKind baseline = PolicyKind::interface_fixed(0);
  std::map<std::string, double> baseline_plt;
  for (const RunRecord& r : records)
    if (r.ok() && r.spec.policy == baseline)
      baseline_plt[tuple_key(r.spec)] = r.plt_s;

  std::vector<SpeedupRecord> out;
  for (const RunRecord& r : records) {
    if (!r.ok()) continue;
    const auto it = baseline_plt.find(tuple_key(r.spec));
    if (it == baseline_plt.end())
      throw MissingBaselineError(
          "no ok if1 baseline for " + r.spec.descriptor());
    SpeedupRecord s;
    s.run = r;
    s.speedup = it->second / r.plt_s;
    s.category = speedup_category(s.speedup);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

const char* kRunHeader =
    "page,policy,if1_rtt_ms,if1_bw_bps,if2_rtt_ms,if2_bw_bps,plt_s,status";

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string quoted = "\"";
  for (const char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string run_row(const RunRecord& r) {
  std::string row = csv_escape(r.spec.page) + "," +
                    policy_name(r.spec.policy) + "," +
                    format_number(r.spec.if1_rtt_ms) + "," +
                    format_number(r.spec.if1_bw_bps) + "," +
                    format_number(r.spec.if2_rtt_ms) + "," +
                    format_number(r.spec.if2_bw_bps) + ",";
  row += r.ok() ? format_number(r.plt_s) : "";
  row += "," + csv_escape(r.status);
  return row;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out << body;
  if (!out.good()) throw InvalidInputError("short write to " + path.string());
}

}  // namespace

std::string speedups_to_csv(const std::vector<SpeedupRecord>& speedups) {
  std::string body = std::string(kRunHeader) + ",speedup,category\n";
  for (const SpeedupRecord& s : speedups) {
    body += run_row(s.run) + "," + format_number(s.speedup) + "," + s.category +
            "\n";
  }
  return body;
}

std::vector<SpeedupRecord> speedups_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      csv_split(line).size() != 10)
    throw InvalidInputError("speedups csv: missing or malformed header");
  std::vector<SpeedupRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != 10)
      throw InvalidInputError("speedups csv line " + std::to_string(lineno) +
                              ": expected 10 fields, got " +
                              std::to_string(f.size()));
    try {
      SpeedupRecord s;
      s.run.spec.page = f[0];
      s.run.spec.policy = parse_policy_name(f[1]);
      s.run.spec.if1_rtt_ms = std::stod(f[2]);
      s.run.spec.if1_bw_bps = std::stod(f[3]);
      s.run.spec.if2_rtt_ms = std::stod(f[4]);
      s.run.spec.if2_bw_bps = std::stod(f[5]);
      s.run.plt_s = f[6].empty() ? 0.0 : std::stod(f[6]);
      s.run.status = f[7];
      s.speedup = std::stod(f[8]);
      s.category = f[9];
      out.push_back(std::move(s));
    } catch (const InvalidInputError&) {
      throw;
    } catch (const std::exception&) {
      throw InvalidInputError("speedups csv line " + std::to_string(lineno) +
                              ": bad numeric field");
    }
  }
  return out;
}

void emit_analysis_reports(const std::vector<SpeedupRecord>& speedups,
                           const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  // Per-policy ECDF of speedups.
  std::map<std::string, std::vector<double>> by_policy;
  for (const SpeedupRecord& s : speedups)
    by_policy[policy_name(s.run.spec.policy)].push_back(s.speedup);
  for (auto& [policy, values] : by_policy) {
    std::sort(values.begin(), values.end());
    std::string body = "speedup,cum_fraction\n";
    for (std::size_t i = 0; i < values.size(); ++i)
      body += format_number(values[i]) + "," +
              format_number(static_cast<double>(i + 1) /
                            static_cast<double>(values.size())) +
              "\n";
    write_file(dir / ("ecdf_" + policy + ".csv"), body);
  }

  // Category counts against each factor level. All five bins are present
  // per level, zeros included, so the rows per level sum to its run count.
  static const char* kCategories[] = {"slower", "equal", "up_to_2x", "2_to_5x",
                                      "over_5x"};
  struct Factor {
    const char* name;
    bool numeric;
  };
  static const Factor kFactors[] = {
      {"page", false},       {"policy", false},     {"if1_rtt_ms", true},
      {"if1_bw_bps", true},  {"if2_rtt_ms", true},  {"if2_bw_bps", true},
  };
  auto level_of = [](const SpeedupRecord& s, const std::string& factor) {
    if (factor == "page") return s.run.spec.page;
    if (factor == "policy") return policy_name(s.run.spec.policy);
    if (factor == "if1_rtt_ms") return format_number(s.run.spec.if1_rtt_ms);
    if (factor == "if1_bw_bps") return format_number(s.run.spec.if1_bw_bps);
    if (factor == "if2_rtt_ms") return format_number(s.run.spec.if2_rtt_ms);
    return format_number(s.run.spec.if2_bw_bps);
  };

  std::string body = "factor,level,category,count\n";
  for (const Factor& factor : kFactors) {
    std::vector<std::string> levels;
    for (const SpeedupRecord& s : speedups) {
      const std::string lv = level_of(s, factor.name);
      if (std::find(levels.begin(), levels.end(), lv) == levels.end())
        levels.push_back(lv);
    }
    std::sort(levels.begin(), levels.end(),
              [&](const std::string& a, const std::string& b) {
                if (factor.numeric) return std::stod(a) < std::stod(b);
                return a < b;
              });
    for (const std::string& lv : levels) {
      for (const char* cat : kCategories) {
        int count = 0;
        for (const SpeedupRecord& s : speedups)
          if (s.category == cat && level_of(s, factor.name) == lv) ++count;
        body += std::string(factor.name) + "," + csv_escape(lv) + "," + cat +
                "," + std::to_string(count) + "\n";
      }
    }
  }
  write_file(dir / "category_by_factor.csv", body);
}

void emit_reports(const std::vector<RunRecord>& records,
                  const std::vector<SpeedupRecord>& speedups,
                  const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  std::string runs = std::string(kRunHeader) + "\n";
  for (const RunRecord& r : records) runs += run_row(r) + "\n";
  write_file(dir / "runs.csv", runs);

  write_file(dir / "speedups.csv", speedups_to_csv(speedups));
  emit_analysis_reports(speedups, out_dir);
}

NetworkScenario preset_scenario(const std::string& name) {
  NetworkScenario s;
  if (name == "symmetric") {
    s.interfaces = {InterfaceSpec{"if1", 45, 10e6},
                    InterfaceSpec{"if2", 45, 10e6}};
  } else if (name == "asymmetric") {
    s.interfaces = {InterfaceSpec{"if1", 20, 6e6},
                    InterfaceSpec{"if2", 70, 13e6}};
  } else if (name == "highly-asym") {
    s.interfaces = {InterfaceSpec{"if1", 10, 3e6},
                    InterfaceSpec{"if2", 100, 20e6}};
  } else {
    std::string msg = "unknown preset '" + name + "'; known presets:";
    for (const std::string& p : preset_names()) msg += " " + p;
    throw InvalidInputError(msg);
  }
  return s;
}

std::vector<std::string> preset_names() {
  return {"symmetric", "asymmetric", "highly-asym"};
}

FactorLevels default_factor_levels(std::vector<std::string> pages) {
  FactorLevels levels;
  levels.pages = std::move(pages);
  for (const std::string& name : known_policy_names())
    levels.policies.push_back(parse_policy_name(name));
  levels.if1_rtt_ms = {10, 20, 30, 50};
  levels.if1_bw_bps = {0.5e6, 2e6, 6e6, 12e6, 20e6, 50e6};
  levels.if2_rtt_ms = {20, 50, 100, 200};
  levels.if2_bw_bps = {0.5e6, 5e6, 20e6, 50e6};
  return levels;
}

FactorLevels factor_levels_from_json(const std::string& text,
                                     std::vector<std::string> pages) {
  FactorLevels levels = default_factor_levels(std::move(pages));
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded())
    throw InvalidInputError("factor levels: not valid JSON");
  if (!doc.is_object())
    throw InvalidInputError("factor levels: expected an object");
  try {
    if (doc.contains("policies")) {
      levels.policies.clear();
      for (const auto& name : doc["policies"])
        levels.policies.push_back(parse_policy_name(name.get<std::string>()));
    }
    if (doc.contains("if1_rtt_ms"))
      levels.if1_rtt_ms = doc["if1_rtt_ms"].get<std::vector<double>>();
    if (doc.contains("if1_bw_bps"))
      levels.if1_bw_bps = doc["if1_bw_bps"].get<std::vector<double>>();
    if (doc.contains("if2_rtt_ms"))
      levels.if2_rtt_ms = doc["if2_rtt_ms"].get<std::vector<double>>();
    if (doc.contains("if2_bw_bps"))
      levels.if2_bw_bps = doc["if2_bw_bps"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("factor levels: ") + e.what());
  }
  return levels;
}

}  // namespace mpsim
