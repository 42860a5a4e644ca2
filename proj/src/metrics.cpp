#include "wacps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace wacps::metrics {

MetricsReport compute_metrics(const EventLog& log) {
  MetricsReport r;
  if (log.events.empty() && (log.tanks.empty() || log.duration <= 0.0)) {
    r.empty = true;
    return r;
  }
  r.events = log.events.size();
  double delay_sum = 0.0;
  std::map<int, std::pair<double, int>> rtt;
  for (const auto& e : log.events) {
    if (e.ul_received >= 0.0) ++r.ul_received;
    if (e.acked >= 0.0) ++r.acked;
    if (e.dropped) ++r.drops;
    if (e.superseded) ++r.superseded;
    if (e.actuated >= 0.0) {
      ++r.actuated;
      const double d = e.actuated - e.generated;
      delay_sum += d;
      r.e2e_delay_max = std::max(r.e2e_delay_max, d);
      auto& acc = rtt[e.node];
      acc.first += d;
      ++acc.second;
    }
  }
  if (r.events > 0) r.e2e_pdr = 100.0 * static_cast<double>(r.actuated) / static_cast<double>(r.events);
  if (r.actuated > 0) {
    r.e2e_delay_mean = delay_sum / static_cast<double>(r.actuated);
    r.ul_reliability = 100.0 * static_cast<double>(r.acked) / static_cast<double>(r.actuated);
    r.ul_reliability_flag = r.ul_reliability > 100.0;
  } else {
    r.ul_reliability_flag = true;
  }
  for (const auto& [node, acc] : rtt) r.node_rtt_mean.emplace_back(node, acc.first / acc.second);
  if (log.duration > 0.0) r.events_per_minute = static_cast<double>(r.events) / (log.duration / 60.0);

  for (std::size_t p = 0; p < log.phases.size(); ++p) {
    const auto& w = log.phases[p];
    PhaseMetrics pm;
    pm.name = w.name;
    for (const auto& e : log.events) {
      if (e.generated >= w.start && e.generated < w.end) ++pm.events;
    }
    if (w.end > w.start) pm.events_per_minute = static_cast<double>(pm.events) / ((w.end - w.start) / 60.0);
    for (const auto& t : log.tanks) {
      if (p < t.phase_peak.size()) {
        pm.overshoot_pct = std::max(pm.overshoot_pct, std::max(t.phase_peak[p] - t.ref, 0.0) / t.ref * 100.0);
      }
    }
    r.overshoot_pct = std::max(r.overshoot_pct, pm.overshoot_pct);
    r.phases.push_back(pm);
  }
  r.critical = r.overshoot_pct > 50.0;
  return r;
}

std::vector<double> inter_event_times(const EventLog& log, Seconds from, Seconds to) {
  std::vector<double> times;
  for (const auto& e : log.events) {
    if (e.generated >= from && e.generated < to) times.push_back(e.generated);
  }
  std::sort(times.begin(), times.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
  return gaps;
}

double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_exponential(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("ks_exponential: need at least 2 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  KsResult r;
  r.n = x.size();
  double sum = 0.0;
  for (double v : x) {
    if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument("ks_exponential: samples must be finite and >= 0");
    sum += v;
  }
  r.mean = sum / static_cast<double>(r.n);
  if (!(r.mean > 0.0)) throw std::invalid_argument("ks_exponential: zero sample mean");
  const double n = static_cast<double>(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    const double f = 1.0 - std::exp(-x[i] / r.mean);
    r.d = std::max({r.d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  r.p_value = kolmogorov_survival((sn + 0.12 + 0.11 / sn) * r.d);
  return r;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) throw std::logic_error("format_number: non-finite value");
  if (v == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> report_columns() {
  return {"events",         "events_per_min", "overshoot_pct", "critical",      "e2e_pdr",
          "e2e_delay_mean", "e2e_delay_max",  "ul_reliability", "ul_rel_flag", "ul_received",
          "acked",          "actuated",       "drops",          "superseded"};
}

std::vector<std::string> report_cells(const MetricsReport& r) {
  auto count = [](std::size_t n) { return std::to_string(n); };
  return {count(r.events),
          format_number(r.events_per_minute),
          format_number(r.overshoot_pct),
          r.critical ? "1" : "0",
          format_number(r.e2e_pdr),
          format_number(r.e2e_delay_mean),
          format_number(r.e2e_delay_max),
          format_number(r.ul_reliability),
          r.ul_reliability_flag ? "1" : "0",
          count(r.ul_received),
          count(r.acked),
          count(r.actuated),
          count(r.drops),
          count(r.superseded)};
}

Table phase_table(const MetricsReport& r) {
  Table t;
  t.columns = {"phase", "events", "events_per_min", "overshoot_pct"};
  for (const auto& p : r.phases) {
    t.rows.push_back({p.name, std::to_string(p.events), format_number(p.events_per_minute),
                      format_number(p.overshoot_pct)});
  }
  return t;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void line(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += quote(cells[i]);
  }
  out += '\n';
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  line(out, t.columns);
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw std::logic_error("to_csv: row width does not match header");
    line(out, row);
  }
  return out;
}

void emit_csv(const Table& t, const std::filesystem::path& path) {
  const std::string text = to_csv(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace wacps::metrics
