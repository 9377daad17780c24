#include "mpsim/model.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"

namespace mpsim {

using ordered_json = nlohmann::ordered_json;

std::string policy_name(const PolicyKind& kind) {
  switch (kind.tag) {
    case PolicyKind::Tag::interface_k:
      return "if" + std::to_string(kind.iface + 1);
    case PolicyKind::Tag::round_robin:
      return "rr";
    case PolicyKind::Tag::mptcp_if1:
      return "mptcp_if1";
    case PolicyKind::Tag::mptcp_rnd:
      return "mptcp_rnd";
    case PolicyKind::Tag::eaf:
      return "eaf";
    case PolicyKind::Tag::eaf_mptcp:
      return "eaf_mptcp";
  }
  throw InternalError("unhandled policy tag");
}

std::vector<std::string> known_policy_names() {
  return {"if1", "if2", "rr", "mptcp_if1", "mptcp_rnd", "eaf", "eaf_mptcp"};
}

PolicyKind parse_policy_name(const std::string& name) {
  if (name == "rr") return PolicyKind::make(PolicyKind::Tag::round_robin);
  if (name == "mptcp_if1") return PolicyKind::make(PolicyKind::Tag::mptcp_if1);
  if (name == "mptcp_rnd") return PolicyKind::make(PolicyKind::Tag::mptcp_rnd);
  if (name == "eaf") return PolicyKind::make(PolicyKind::Tag::eaf);
  if (name == "eaf_mptcp") return PolicyKind::make(PolicyKind::Tag::eaf_mptcp);
  if (name.size() > 2 && name.rfind("if", 0) == 0) {
    const std::string digits = name.substr(2);
    if (!digits.empty() &&
        std::all_of(digits.begin(), digits.end(),
                    [](unsigned char c) { return std::isdigit(c); })) {
      const long k = std::stol(digits);
      if (k >= 1) return PolicyKind::interface_fixed(static_cast<int>(k - 1));
    }
  }
  std::string msg = "unknown policy '" + name + "'; known policies:";
  for (const auto& n : known_policy_names()) msg += " " + n;
  throw InvalidInputError(msg);
}

std::vector<std::string> validate_page(const WorkloadPage& page) {
  std::vector<std::string> violations;
  if (page.transfers.empty()) {
    violations.push_back("page has no transfers");
    return violations;
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < page.transfers.size(); ++i) {
    const TransferSpec& t = page.transfers[i];
    if (t.id.empty())
      violations.push_back("transfer #" + std::to_string(i) + " has empty id");
    else if (!index.emplace(t.id, i).second)
      violations.push_back("duplicate transfer id '" + t.id + "'");
    if (t.size_bytes < 0)
      violations.push_back("transfer '" + t.id + "' has negative size");
    if (t.host.empty())
      violations.push_back("transfer '" + t.id + "' has empty host");
  }
  for (const TransferSpec& t : page.transfers) {
    for (const std::string& d : t.deps) {
      if (!index.count(d))
        violations.push_back("transfer '" + t.id + "' depends on unknown id '" +
                             d + "'");
      else if (d == t.id)
        violations.push_back("transfer '" + t.id + "' depends on itself");
    }
  }
  if (!violations.empty()) return violations;

  // Kahn's algorithm; leftovers sit on a cycle.
  std::vector<int> indegree(page.transfers.size(), 0);
  std::vector<std::vector<std::size_t>> dependents(page.transfers.size());
  for (std::size_t i = 0; i < page.transfers.size(); ++i) {
    for (const std::string& d : page.transfers[i].deps) {
      dependents[index[d]].push_back(i);
      ++indegree[i];
    }
  }
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < indegree.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t i = ready.back();
    ready.pop_back();
    ++visited;
    for (const std::size_t j : dependents[i])
      if (--indegree[j] == 0) ready.push_back(j);
  }
  if (visited != page.transfers.size()) {
    std::string cyclic = "dependency cycle involving:";
    for (std::size_t i = 0; i < indegree.size(); ++i)
      if (indegree[i] > 0) cyclic += " '" + page.transfers[i].id + "'";
    violations.push_back(cyclic);
  }
  return violations;
}

std::vector<std::string> validate_scenario(const NetworkScenario& scenario,
                                           const SimConfig& config,
                                           int max_interfaces) {
  std::vector<std::string> violations;
  const std::size_t n = scenario.interfaces.size();
  if (n < 1 || n > static_cast<std::size_t>(max_interfaces))
    violations.push_back("scenario must have between 1 and " +
                         std::to_string(max_interfaces) + " interfaces, got " +
                         std::to_string(n));
  std::set<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    const InterfaceSpec& s = scenario.interfaces[i];
    if (s.name.empty())
      violations.push_back("interface #" + std::to_string(i) +
                           " has empty name");
    else if (!names.insert(s.name).second)
      violations.push_back("duplicate interface name '" + s.name + "'");
    if (!(s.rtt_ms > 0))
      violations.push_back("interface '" + s.name + "' rtt_ms must be > 0");
    if (!(s.bandwidth_bps > 0))
      violations.push_back("interface '" + s.name +
                           "' bandwidth_bps must be > 0");
  }
  if (config.initial_cwnd_segments <= 0)
    violations.push_back("initial_cwnd_segments must be > 0");
  if (config.mss_bytes <= 0) violations.push_back("mss_bytes must be > 0");
  if (config.max_conns_per_server <= 0)
    violations.push_back("max_conns_per_server must be > 0");
  if (config.max_conns_total <= 0)
    violations.push_back("max_conns_total must be > 0");
  if (!(config.idle_timeout > 0))
    violations.push_back("idle_timeout must be > 0");
  if (config.tls_handshake_rtts < 0)
    violations.push_back("tls_handshake_rtts must be >= 0");
  if (config.new_conn_rtts < 1)
    violations.push_back("new_conn_rtts must be >= 1");
  if (config.reuse_rtts < 0) violations.push_back("reuse_rtts must be >= 0");
  if (config.reuse_rtts > config.new_conn_rtts)
    violations.push_back("reuse_rtts must not exceed new_conn_rtts");
  return violations;
}

namespace {

ordered_json parse_or_throw(const std::string& text, const char* what) {
  ordered_json doc = ordered_json::parse(text, nullptr, false);
  if (doc.is_discarded())
    throw InvalidInputError(std::string(what) + ": not valid JSON");
  return doc;
}

template <typename T>
T field(const ordered_json& obj, const char* key, const char* ctx) {
  if (!obj.is_object() || !obj.contains(key))
    throw InvalidInputError(std::string(ctx) + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInputError(std::string(ctx) + ": field '" + key +
                            "' has wrong type");
  }
}

template <typename T>
T field_or(const ordered_json& obj, const char* key, T fallback,
           const char* ctx) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInputError(std::string(ctx) + ": field '" + key +
                            "' has wrong type");
  }
}

}  // namespace

std::string to_json(const WorkloadPage& page) {
  ordered_json doc;
  doc["name"] = page.name;
  doc["transfers"] = ordered_json::array();
  for (const TransferSpec& t : page.transfers) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["size_bytes"] = t.size_bytes;
    jt["host"] = t.host;
    jt["tls"] = t.tls;
    jt["deps"] = t.deps;
    doc["transfers"].push_back(std::move(jt));
  }
  return doc.dump(2) + "\n";
}

WorkloadPage page_from_json(const std::string& text) {
  const ordered_json doc = parse_or_throw(text, "workload page");
  WorkloadPage page;
  page.name = field_or<std::string>(doc, "name", "", "workload page");
  if (!doc.contains("transfers") || !doc.at("transfers").is_array())
    throw InvalidInputError("workload page: missing 'transfers' array");
  for (const auto& jt : doc.at("transfers")) {
    TransferSpec t;
    t.id = field<std::string>(jt, "id", "transfer");
    t.size_bytes = field<std::int64_t>(jt, "size_bytes", "transfer");
    t.host = field<std::string>(jt, "host", "transfer");
    t.tls = field_or<bool>(jt, "tls", false, "transfer");
    t.deps = field_or<std::vector<std::string>>(jt, "deps", {}, "transfer");
    page.transfers.push_back(std::move(t));
  }
  return page;
}

std::string to_json(const NetworkScenario& scenario) {
  ordered_json doc;
  doc["interfaces"] = ordered_json::array();
  for (const InterfaceSpec& s : scenario.interfaces) {
    ordered_json js;
    js["name"] = s.name;
    js["rtt_ms"] = s.rtt_ms;
    js["bandwidth_bps"] = s.bandwidth_bps;
    doc["interfaces"].push_back(std::move(js));
  }
  return doc.dump(2) + "\n";
}

NetworkScenario scenario_from_json(const std::string& text) {
  const ordered_json doc = parse_or_throw(text, "scenario");
  NetworkScenario scenario;
  if (!doc.contains("interfaces") || !doc.at("interfaces").is_array())
    throw InvalidInputError("scenario: missing 'interfaces' array");
  std::size_t idx = 0;
  for (const auto& js : doc.at("interfaces")) {
    InterfaceSpec s;
    s.name = field_or<std::string>(js, "name", "if" + std::to_string(idx + 1),
                                   "interface");
    s.rtt_ms = field<double>(js, "rtt_ms", "interface");
    s.bandwidth_bps = field<double>(js, "bandwidth_bps", "interface");
    scenario.interfaces.push_back(std::move(s));
    ++idx;
  }
  return scenario;
}

std::string to_json(const SimConfig& config) {
  ordered_json doc;
  doc["initial_cwnd_segments"] = config.initial_cwnd_segments;
  doc["mss_bytes"] = config.mss_bytes;
  doc["max_conns_per_server"] = config.max_conns_per_server;
  doc["max_conns_total"] = config.max_conns_total;
  doc["idle_timeout"] = config.idle_timeout;
  doc["pipelining"] = config.pipelining;
  doc["tls_handshake_rtts"] = config.tls_handshake_rtts;
  doc["new_conn_rtts"] = config.new_conn_rtts;
  doc["reuse_rtts"] = config.reuse_rtts;
  doc["rng_seed"] = config.rng_seed;
  doc["bandwidth_estimator"] =
      config.bandwidth_estimator == BandwidthEstimator::oracle ? "oracle"
                                                               : "online";
  return doc.dump(2) + "\n";
}

SimConfig config_from_json(const std::string& text) {
  const ordered_json doc = parse_or_throw(text, "config");
  if (!doc.is_object()) throw InvalidInputError("config: expected an object");
  SimConfig c;
  c.initial_cwnd_segments =
      field_or(doc, "initial_cwnd_segments", c.initial_cwnd_segments, "config");
  c.mss_bytes = field_or(doc, "mss_bytes", c.mss_bytes, "config");
  c.max_conns_per_server =
      field_or(doc, "max_conns_per_server", c.max_conns_per_server, "config");
  c.max_conns_total =
      field_or(doc, "max_conns_total", c.max_conns_total, "config");
  c.idle_timeout = field_or(doc, "idle_timeout", c.idle_timeout, "config");
  c.pipelining = field_or(doc, "pipelining", c.pipelining, "config");
  c.tls_handshake_rtts =
      field_or(doc, "tls_handshake_rtts", c.tls_handshake_rtts, "config");
  c.new_conn_rtts = field_or(doc, "new_conn_rtts", c.new_conn_rtts, "config");
  c.reuse_rtts = field_or(doc, "reuse_rtts", c.reuse_rtts, "config");
  c.rng_seed = field_or(doc, "rng_seed", c.rng_seed, "config");
  const std::string est = field_or<std::string>(
      doc, "bandwidth_estimator", "oracle", "config");
  if (est == "oracle")
    c.bandwidth_estimator = BandwidthEstimator::oracle;
  else if (est == "online")
    c.bandwidth_estimator = BandwidthEstimator::online;
  else
    throw InvalidInputError("config: bandwidth_estimator must be 'oracle' or "
                            "'online', got '" + est + "'");
  return c;
}

std::string to_json(const SimResult& result) {
  ordered_json doc;
  doc["page_load_time"] = result.page_load_time;
  doc["events_processed"] = result.events_processed;
  doc["transfers"] = ordered_json::array();
  for (const TransferTiming& t : result.transfers) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["start_s"] = t.start_s;
    jt["end_s"] = t.end_s;
    jt["interfaces"] = t.interfaces;
    jt["conn_id"] = t.conn_id;
    jt["reused"] = t.reused;
    doc["transfers"].push_back(std::move(jt));
  }
  return doc.dump(2) + "\n";
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace mpsim
