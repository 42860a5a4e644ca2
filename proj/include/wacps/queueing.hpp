#pragma once

#include <stdexcept>
#include <vector>

#include "wacps/phy.hpp"
#include "wacps/sim_core.hpp"

namespace wacps::queueing {

// Rates are per request round (k * t_slot seconds) and waiting times are
// counted in rounds unless the name says seconds.

struct RoundConfig {
  int k = 5;
  double t_slot = 0.1;
  [[nodiscard]] double round_s() const { return k * t_slot; }
};

double per_round(double pkt_per_min, double round_s);

class UnstableLoadError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// mu = ln(1 / (1 - exp(-lambda / k))).
double request_service_rate(double lambda, int k);

/// Load at which lambda == mu(lambda), i.e. the M/M/1 saturation point.
double saturation_lambda(int k);

struct RequestDelay {
  double probability = 0.0;  // P[t_req <= x]
  double mean_wait_rounds = 0.0;
  double mean_wait_s = 0.0;
};

/// P[t_req <= x] = 1 - exp(-(mu - lambda) x) with x converted to rounds.
RequestDelay request_delay_probability(double lambda, int k, double x_seconds,
                                       double round_s = 0.5);

/// Smallest x (seconds) with P[t_req <= x] >= q.
double request_delay_quantile(double lambda, int k, double q, double round_s = 0.5);

/// Largest integer load (packets per minute) that still meets
/// P[t_req <= x] >= q.
int request_capacity_ppm(int k, double x_seconds, double q, double round_s = 0.5);

/// 1/n + lambda / (2 n (n - lambda)).
double send_delay_mdn(double lambda_dt, int n);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct UpdateDelay {
  Interval bounds;
  double period = 0.0;  // start-to-start spacing of back-to-back frames
};

/// Actuation-phase delay on a dedicated downlink channel: the duty-cycle wait
/// left by the previous frame plus the airtime of a single-actuator update,
/// rounded up to the `grid` (the request slot length). The previous frame is
/// one actuator for lo and the largest frame n_actuators produce for hi.
UpdateDelay update_delay_bounds(int n_actuators, int bytes_per_actuator, double dc,
                                const ChannelPlan& plan, int channel_id, double grid = 0.1);
UpdateDelay update_delay_bounds(int n_actuators, int bytes_per_actuator, double dc);

struct BudgetInputs {
  RoundConfig rounds;
  int n_channels = 3;
  double lambda_lo_ppm = 12.0;
  double lambda_hi_ppm = 150.0;
  double t_req_bound_s = 10.0;
  double t_req_confidence = 0.99;
  int n_actuators = kMaxPayloadBytes / 2;
  int bytes_per_actuator = 2;
  double downlink_dc = 0.10;
};

struct DelayBudget {
  Interval t_sync;
  Interval t_req;
  Interval t_send;
  Interval t_update;
  double t_req_confidence = 0.99;
};

/// Throws UnstableLoadError if the upper load misses the t_req bound at the
/// requested confidence.
DelayBudget compute_budget(const BudgetInputs& in);

Interval mac_delay_bounds(const DelayBudget& b);

struct C1Result {
  bool ok = false;
  double margin = 0.0;
};
C1Result check_c1(double tau_d, const DelayBudget& budget);
bool check_c2(double event_rate_per_min, double capacity_per_min);

/// Monte-Carlo of the request queue: Poisson arrivals into a FIFO served by
/// repeated request attempts. Each attempt picks a uniform slot out of k and
/// collides when Poisson(lambda / k) background requesters share it; a
/// collision costs one round and the successful round contributes the
/// residual time of the constant-hazard service. Returns sojourn times in
/// seconds.
std::vector<double> simulate_request_queue(double lambda, int k, double round_s, int n_requests,
                                           RngStream& rng);

/// Protocol-level request stage using the Ctrl-MAC gateway and node rules
/// (uniform slot choice, FTR-based retry). Returns per-request delay from the
/// first request round to the granting round, plus the best-case 2 t_slot.
std::vector<double> simulate_slotted_requests(double lambda, const RoundConfig& rc, int n_rounds,
                                              RngStream& rng);

double empirical_cdf(const std::vector<double>& samples, double x);

}  // namespace wacps::queueing
