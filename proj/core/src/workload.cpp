#include "mpsim/workload.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "json.hpp"

namespace mpsim {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void bad_entry(std::size_t index, const std::string& why) {
  throw MalformedHarError("har entry " + std::to_string(index) + ": " + why);
}

// Civil date to days since 1970-01-01 (Gregorian, proleptic).
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const long yoe = y - era * 400;
  const long doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

// ISO 8601 like "2015-12-07T12:34:56.789+01:00" (or trailing Z) to epoch ms.
bool parse_iso8601_ms(const std::string& s, double* out) {
  int y, mon, d, h, mi;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%n", &y, &mon, &d, &h, &mi,
                  &consumed) != 5 ||
      consumed == 0)
    return false;
  std::size_t pos = static_cast<std::size_t>(consumed);
  double sec = 0;
  std::size_t sec_len = 0;
  try {
    sec = std::stod(s.substr(pos), &sec_len);
  } catch (...) {
    return false;
  }
  if (sec_len == 0 || sec < 0 || sec >= 61) return false;
  pos += sec_len;
  double offset_min = 0;
  if (pos < s.size()) {
    const char c = s[pos];
    if (c == 'Z' || c == 'z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      int oh = 0, om = 0;
      const int got = std::sscanf(s.c_str() + pos + 1, "%2d:%2d", &oh, &om);
      if (got < 1) return false;
      offset_min = oh * 60 + om;
      if (c == '-') offset_min = -offset_min;
      pos = s.size();  // nothing meaningful may follow
    } else {
      return false;
    }
  }
  if (mon < 1 || mon > 12 || d < 1 || d > 31 || h > 23 || mi > 59) return false;
  const double days = static_cast<double>(days_from_civil(y, mon, d));
  *out = ((days * 24 + h) * 60 + mi - offset_min) * 60000.0 + sec * 1000.0;
  return true;
}

void split_url(const std::string& url, std::size_t index, std::string* host,
               bool* tls) {
  const std::size_t sep = url.find("://");
  if (sep == std::string::npos) bad_entry(index, "url has no scheme: " + url);
  std::string scheme = url.substr(0, sep);
  std::transform(scheme.begin(), scheme.end(), scheme.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  *tls = scheme == "https" || scheme == "wss";
  std::size_t end = url.find_first_of("/?#", sep + 3);
  if (end == std::string::npos) end = url.size();
  std::string h = url.substr(sep + 3, end - sep - 3);
  const std::size_t at = h.rfind('@');
  if (at != std::string::npos) h = h.substr(at + 1);
  const std::size_t colon = h.rfind(':');
  if (colon != std::string::npos && h.find(']') == std::string::npos)
    h = h.substr(0, colon);
  std::transform(h.begin(), h.end(), h.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (h.empty()) bad_entry(index, "url has no host: " + url);
  *host = h;
}

}  // namespace

std::vector<HarEntry> parse_har(const std::string& text) {
  ordered_json doc = ordered_json::parse(text, nullptr, false);
  if (doc.is_discarded())
    throw MalformedHarError("document is not valid JSON");
  if (!doc.is_object() || !doc.contains("log") ||
      !doc["log"].contains("entries") || !doc["log"]["entries"].is_array())
    throw MalformedHarError("document has no log.entries array");

  std::vector<HarEntry> entries;
  std::size_t index = 0;
  for (const auto& je : doc["log"]["entries"]) {
    HarEntry e;
    if (!je.contains("request") || !je["request"].contains("url") ||
        !je["request"]["url"].is_string())
      bad_entry(index, "missing request.url");
    e.url = je["request"]["url"].get<std::string>();
    split_url(e.url, index, &e.host, &e.tls);

    if (!je.contains("startedDateTime") || !je["startedDateTime"].is_string())
      bad_entry(index, "missing startedDateTime");
    if (!parse_iso8601_ms(je["startedDateTime"].get<std::string>(),
                          &e.start_ms))
      bad_entry(index, "unparseable startedDateTime '" +
                           je["startedDateTime"].get<std::string>() + "'");

    if (!je.contains("time") || !je["time"].is_number())
      bad_entry(index, "missing time");
    e.end_ms = e.start_ms + std::max(0.0, je["time"].get<double>());

    e.size_bytes = 0;
    bool have = false;
    if (je.contains("response")) {
      const auto& resp = je["response"];
      if (resp.contains("content") && resp["content"].contains("size") &&
          resp["content"]["size"].is_number()) {
        const std::int64_t v = resp["content"]["size"].get<std::int64_t>();
        if (v >= 0) {
          e.size_bytes = v;
          have = true;
        }
      }
      if (!have && resp.contains("bodySize") &&
          resp["bodySize"].is_number()) {
        const std::int64_t v = resp["bodySize"].get<std::int64_t>();
        if (v >= 0) e.size_bytes = v;
      }
    }
    entries.push_back(std::move(e));
    ++index;
  }
  return entries;
}

WorkloadPage derive_dependencies(const std::vector<HarEntry>& entries,
                                 double epsilon_ms,
                                 const std::string& page_name) {
  const int n = static_cast<int>(entries.size());
  // Strict total order all edges follow; makes the result acyclic even when
  // epsilon lets two near-simultaneous entries precede each other.
  auto precedes = [&](int a, int b) {
    if (entries[a].end_ms != entries[b].end_ms)
      return entries[a].end_ms < entries[b].end_ms;
    return a < b;
  };
  std::vector<std::vector<int>> succ(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && entries[a].end_ms <= entries[b].start_ms + epsilon_ms &&
          precedes(a, b))
        succ[a].push_back(b);

  // reach[x] = nodes reachable from x via one or more edges, computed in
  // reverse topological order of the total order above.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), precedes);
  const int words = (n + 63) / 64;
  std::vector<std::vector<std::uint64_t>> reach(
      n, std::vector<std::uint64_t>(words, 0));
  for (int i = n - 1; i >= 0; --i) {
    const int a = order[i];
    for (const int b : succ[a]) {
      for (int w = 0; w < words; ++w) reach[a][w] |= reach[b][w];
      reach[a][b / 64] |= std::uint64_t{1} << (b % 64);
    }
  }

  // An edge is redundant when the target is reachable through any other
  // direct successor.
  std::vector<std::vector<int>> deps(n);
  for (int a = 0; a < n; ++a) {
    for (const int b : succ[a]) {
      bool redundant = false;
      for (const int j : succ[a]) {
        if (j == b) continue;
        if (reach[j][b / 64] & (std::uint64_t{1} << (b % 64))) {
          redundant = true;
          break;
        }
      }
      if (!redundant) deps[b].push_back(a);
    }
  }

  WorkloadPage page;
  page.name = page_name;
  for (int i = 0; i < n; ++i) {
    TransferSpec t;
    t.id = "e" + std::to_string(i);
    t.size_bytes = entries[i].size_bytes;
    t.host = entries[i].host;
    t.tls = entries[i].tls;
    for (const int a : deps[i]) t.deps.push_back("e" + std::to_string(a));
    page.transfers.push_back(std::move(t));
  }
  return page;
}

SyntheticSpec parse_synthetic_groups(const std::string& text) {
  SyntheticSpec spec;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t plus = text.find('+', pos);
    if (plus == std::string::npos) plus = text.size();
    const std::string part = text.substr(pos, plus - pos);
    const std::size_t x = part.find('x');
    if (part.empty() || x == std::string::npos || x == 0 ||
        x + 1 >= part.size())
      throw InvalidInputError("bad object group '" + part +
                              "', expected COUNTxSIZE like 32x100KB");
    SyntheticGroup g;
    std::size_t used = 0;
    try {
      g.count = std::stoi(part.substr(0, x), &used);
    } catch (...) {
      used = 0;
    }
    if (used != x || g.count <= 0)
      throw InvalidInputError("bad object count in '" + part + "'");
    std::string size_str = part.substr(x + 1);
    std::int64_t multiplier = 1;
    auto strip = [&](const char* suffix, std::int64_t m) {
      const std::size_t len = std::strlen(suffix);
      if (size_str.size() > len &&
          size_str.compare(size_str.size() - len, len, suffix) == 0) {
        size_str.resize(size_str.size() - len);
        multiplier = m;
        return true;
      }
      return false;
    };
    strip("GB", 1024ll * 1024 * 1024) || strip("MB", 1024 * 1024) ||
        strip("KB", 1024) || strip("B", 1);
    try {
      g.size_bytes = std::stoll(size_str, &used) * multiplier;
    } catch (...) {
      used = 0;
    }
    if (used != size_str.size() || g.size_bytes < 0)
      throw InvalidInputError("bad object size in '" + part + "'");
    spec.groups.push_back(g);
    pos = plus + 1;
    if (plus == text.size()) break;
  }
  if (spec.groups.empty())
    throw InvalidInputError("object spec is empty");
  return spec;
}

WorkloadPage generate_synthetic(const SyntheticSpec& spec,
                                std::uint64_t /*seed*/) {
  if (spec.host_count < 1)
    throw InvalidInputError("host_count must be >= 1");
  for (const SyntheticGroup& g : spec.groups)
    if (g.count < 0 || g.size_bytes < 0)
      throw InvalidInputError("object groups need non-negative count and size");

  WorkloadPage page;
  std::string name = "synthetic";
  for (const SyntheticGroup& g : spec.groups)
    name += "-" + std::to_string(g.count) + "x" + std::to_string(g.size_bytes);
  page.name = name + "-h" + std::to_string(spec.host_count);

  TransferSpec root;
  root.id = "root";
  root.size_bytes = 10 * 1024;
  root.host = "host0";
  root.tls = spec.tls;
  page.transfers.push_back(std::move(root));

  int j = 0;
  for (const SyntheticGroup& g : spec.groups) {
    for (int c = 0; c < g.count; ++c, ++j) {
      TransferSpec t;
      t.id = "obj" + std::to_string(j + 1);
      t.size_bytes = g.size_bytes;
      t.host = "host" + std::to_string(j % spec.host_count);
      t.tls = spec.tls;
      t.deps = {"root"};
      page.transfers.push_back(std::move(t));
    }
  }
  return page;
}

}  // namespace mpsim
