#include "wacps/queueing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wacps/ctrlmac.hpp"

namespace wacps::queueing {

namespace {

int poisson(RngStream& rng, double mean) {
  // Inversion; means here are small (<= a few per round).
  const double limit = std::exp(-mean);
  double p = rng.unit();
  int n = 0;
  double term = limit;
  double cdf = term;
  while (p > cdf && n < 10000) {
    ++n;
    term *= mean / n;
    cdf += term;
  }
  return n;
}

double ceil_to_grid(double x, double grid) {
  // Guard against 0.4000000001 style representation noise.
  return std::ceil(x / grid - 1e-9) * grid;
}

}  // namespace

double per_round(double pkt_per_min, double round_s) { return pkt_per_min / 60.0 * round_s; }

double request_service_rate(double lambda, int k) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return -std::log(-std::expm1(-lambda / k));
}

double saturation_lambda(int k) {
  double lo = 1e-9, hi = 10.0 * k;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (request_service_rate(mid, k) > mid) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RequestDelay request_delay_probability(double lambda, int k, double x_seconds, double round_s) {
  if (x_seconds < 0.0) throw std::invalid_argument("x must be >= 0");
  const double mu = request_service_rate(lambda, k);
  if (!(lambda < mu)) {
    std::ostringstream os;
    os << "unstable request load: lambda=" << lambda << " >= mu=" << mu
       << " per round; saturation at lambda=" << saturation_lambda(k) << " per round ("
       << saturation_lambda(k) * 60.0 / round_s << " pkt/min)";
    throw UnstableLoadError(os.str());
  }
  RequestDelay r;
  r.probability = -std::expm1(-(mu - lambda) * x_seconds / round_s);
  r.mean_wait_rounds = 1.0 / (mu - lambda);
  r.mean_wait_s = r.mean_wait_rounds * round_s;
  return r;
}

double request_delay_quantile(double lambda, int k, double q, double round_s) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("q must be in (0,1)");
  const auto r = request_delay_probability(lambda, k, 0.0, round_s);
  return -std::log1p(-q) * r.mean_wait_s;
}

int request_capacity_ppm(int k, double x_seconds, double q, double round_s) {
  int best = 0;
  for (int ppm = 1;; ++ppm) {
    const double lam = per_round(ppm, round_s);
    if (!(lam < request_service_rate(lam, k))) break;
    if (request_delay_probability(lam, k, x_seconds, round_s).probability < q) break;
    best = ppm;
  }
  return best;
}

double send_delay_mdn(double lambda_dt, int n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (lambda_dt < 0.0) throw std::invalid_argument("lambda_dt must be >= 0");
  if (!(lambda_dt < n)) {
    throw UnstableLoadError("M/D/n saturated: lambda_dt >= n (" + std::to_string(lambda_dt) + " >= " +
                            std::to_string(n) + ")");
  }
  return 1.0 / n + lambda_dt / (2.0 * n * (n - lambda_dt));
}

UpdateDelay update_delay_bounds(int n_actuators, int bytes_per_actuator, double dc,
                                const ChannelPlan& plan, int channel_id, double grid) {
  if (n_actuators < 0 || bytes_per_actuator < 1) throw std::invalid_argument("bad actuator counts");
  if (!(dc > 0.0 && dc <= 1.0)) throw std::invalid_argument("dc must be in (0,1]");
  const double toa_one = time_on_air(bytes_per_actuator, plan, channel_id);
  UpdateDelay out;
  out.bounds.lo = ceil_to_grid(toa_one / dc + toa_one, grid);
  if (n_actuators == 0) {
    out.bounds.hi = out.bounds.lo;
    return out;
  }
  const int per_frame = kMaxPayloadBytes / bytes_per_actuator;
  const int largest = std::min(n_actuators, per_frame) * bytes_per_actuator;
  const double toa_big = time_on_air(largest, plan, channel_id);
  out.bounds.hi = ceil_to_grid(toa_big / dc + toa_one, grid);
  out.period = toa_big / dc;
  return out;
}

UpdateDelay update_delay_bounds(int n_actuators, int bytes_per_actuator, double dc) {
  const auto plan = ChannelPlan::default_plan();
  return update_delay_bounds(n_actuators, bytes_per_actuator, dc, plan,
                             plan.ids_with_role(ChannelRole::kActuation).front());
}

DelayBudget compute_budget(const BudgetInputs& in) {
  const auto& rc = in.rounds;
  DelayBudget b;
  b.t_sync = {0.0, rc.k * rc.t_slot};
  // Best case: the request slot plus the reply, one slot each.
  b.t_req.lo = 2.0 * rc.t_slot;
  const double lam_hi = per_round(in.lambda_hi_ppm, rc.round_s());
  const double p = request_delay_probability(lam_hi, rc.k, in.t_req_bound_s, rc.round_s()).probability;
  if (p < in.t_req_confidence) {
    std::ostringstream os;
    os << "t_req bound " << in.t_req_bound_s << " s holds with P=" << p << " < "
       << in.t_req_confidence << " at " << in.lambda_hi_ppm << " pkt/min";
    throw UnstableLoadError(os.str());
  }
  b.t_req.hi = in.t_req_bound_s;
  b.t_req_confidence = in.t_req_confidence;
  b.t_send.lo = send_delay_mdn(per_round(in.lambda_lo_ppm, rc.round_s()), in.n_channels);
  b.t_send.hi = send_delay_mdn(lam_hi, in.n_channels);
  b.t_update =
      update_delay_bounds(in.n_actuators, in.bytes_per_actuator, in.downlink_dc, ChannelPlan::default_plan(),
                          ChannelPlan::default_plan().ids_with_role(ChannelRole::kActuation).front(),
                          rc.t_slot)
          .bounds;
  return b;
}

Interval mac_delay_bounds(const DelayBudget& b) {
  return {b.t_sync.lo + b.t_req.lo + b.t_send.lo + b.t_update.lo,
          b.t_sync.hi + b.t_req.hi + b.t_send.hi + b.t_update.hi};
}

C1Result check_c1(double tau_d, const DelayBudget& budget) {
  const double hi = mac_delay_bounds(budget).hi;
  return {hi < tau_d, tau_d - hi};
}

bool check_c2(double event_rate_per_min, double capacity_per_min) {
  if (event_rate_per_min < 0.0 || capacity_per_min < 0.0) throw std::invalid_argument("negative rate");
  return event_rate_per_min < capacity_per_min;
}

std::vector<double> simulate_request_queue(double lambda, int k, double round_s, int n_requests,
                                           RngStream& rng) {
  const double mu = request_service_rate(lambda, k);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_requests));
  const double slot_load = lambda / k;
  double wait = 0.0;  // Lindley recursion, in rounds
  for (int i = 0; i < n_requests; ++i) {
    int collisions = 0;
    while (true) {
      (void)rng.uniform_int(1, k);  // own slot; background occupancy is iid per slot
      if (poisson(rng, slot_load) == 0) break;
      ++collisions;
    }
    // Residual within the winning round for a constant-hazard (rate mu) service.
    const double frac = -std::log1p(-rng.unit() * -std::expm1(-mu)) / mu;
    const double service = collisions + frac;
    out.push_back((wait + service) * round_s);
    const double gap = rng.exponential(1.0 / lambda);
    wait = std::max(wait + service - gap, 0.0);
  }
  return out;
}

std::vector<double> simulate_slotted_requests(double lambda, const RoundConfig& rc, int n_rounds,
                                              RngStream& rng) {
  struct Pending {
    ctrlmac::NodeMacState st;
    int first_request = -1;
    int last_request = -1;
  };
  ctrlmac::GatewaySchedule gw;
  gw.layout.k = rc.k;
  std::vector<Pending> nodes;
  std::optional<ctrlmac::Rrm> rrm;
  std::vector<double> delays;
  for (int r = 0; r < n_rounds; ++r) {
    const int arrivals = poisson(rng, lambda);
    for (int a = 0; a < arrivals; ++a) {
      Pending p;
      ctrlmac::node_on_sample(p.st, {0.0, 0.0, 0});
      nodes.push_back(p);
    }
    if (!rrm) rrm = ctrlmac::Rrm{std::vector<ctrlmac::RrmSlot>(static_cast<std::size_t>(rc.k)), 0};
    std::vector<ctrlmac::SlotRequest> requests;
    std::vector<Pending> keep;
    keep.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& p = nodes[i];
      const auto act = ctrlmac::node_on_rrm(p.st, rrm, rng, rc.k);
      if (std::holds_alternative<ctrlmac::SendData>(act)) {
        delays.push_back((p.last_request - p.first_request) * rc.round_s() + 2.0 * rc.t_slot);
        continue;
      }
      if (const auto* req = std::get_if<ctrlmac::SendRequest>(&act)) {
        if (p.first_request < 0) p.first_request = r;
        p.last_request = r;
        requests.push_back({static_cast<int>(keep.size()), req->slot});
      }
      keep.push_back(p);
    }
    nodes = std::move(keep);
    rrm = ctrlmac::gateway_round(requests, gw).rrm;
  }
  return delays;
}

double empirical_cdf(const std::vector<double>& samples, double x) {
  if (samples.empty()) return 0.0;
  const auto n = std::count_if(samples.begin(), samples.end(), [x](double s) { return s <= x; });
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

}  // namespace wacps::queueing
