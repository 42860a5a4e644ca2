#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wacps/sim_core.hpp"

namespace wacps::plant {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Linearised tank around its reference level. Level deviation xi obeys
///   dxi/dt = -a xi + beta (v - v_eq) + w
/// where v is the in-valve opening and w the demand disturbance (m/s).
struct TankParams {
  double a = 2e-4;      // outflow sensitivity, 1/s
  double beta = 3e-3;    // fill rate per unit valve opening, m/s
  double v_eq = 0.5;     // valve opening that balances the design demand
  double ref_level = 3.0;
  double tank_height = 4.5;
  double initial_level = 0.5;
};

/// Per-tank LQ weights on level error (q) and valve deviation (r).
struct LqWeights {
  double q = 1.0;
  double r = 1.1e-3;
};

struct SubsystemModel {
  MatrixXd A;
  MatrixXd B;
  MatrixXd K;
  double h = 4.5;
  double sigma = 0.1;
  double rho = 1e-3;
  double tau_d = 0.0;
  VectorXd ref_levels;
  VectorXd tank_height;
  VectorXd v_bias;          // feedforward valve opening
  VectorXd initial_levels;  // absolute levels at t = 0
  VectorXd demand_gain;     // level rate (m/s) per unit of relative demand excess

  [[nodiscard]] int n() const { return static_cast<int>(A.rows()); }
  [[nodiscard]] int m() const { return static_cast<int>(B.cols()); }
  /// Throws std::invalid_argument on dimension or range errors, or when
  /// A + BK is not Hurwitz.
  void validate() const;
};

class PlantModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Diagonal DMA model with one level sensor and one in-valve per tank and a
/// per-tank continuous LQ gain.
SubsystemModel build_dma_plant(int n_tanks, std::span<const TankParams> tanks,
                               const LqWeights& weights = {});

/// Scalar continuous LQ gain for dx = a x + b u, cost q x^2 + r u^2.
double scalar_lq_gain(double a, double b, double q, double r);

struct PlantState {
  VectorXd xi;      // level deviation, m
  VectorXd xi_hat;  // controller-side held estimate
  VectorXd v;       // applied valve openings in [0, 1]
  Seconds t = 0.0;
};

/// Exact zero-order-hold transition over dt: x+ = Ad x + Gd u with
/// Ad = e^{A dt}, Gd = int_0^dt e^{A s} ds.
struct Zoh {
  MatrixXd Ad;
  MatrixXd Gd;
  double dt = 0.0;
};
Zoh discretize(const MatrixXd& A, double dt);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// xi+ = e^{A dt} xi + (int e^{As} ds)(B (v - v_bias) + w). Throws
/// DivergenceError when the result is not finite.
PlantState integrate_step(const SubsystemModel& model, const PlantState& state,
                          const VectorXd& disturbance, double dt);
PlantState integrate_step(const SubsystemModel& model, const Zoh& zoh, const PlantState& state,
                          const VectorXd& disturbance);

/// True iff |xi_hat - xi| - sigma |xi| > 0.
bool event_check(double xi, double xi_hat, double sigma);

VectorXd holder_update(const VectorXd& xi_hat, const VectorXd& xi_sampled,
                       const std::vector<bool>& flags);

/// v = K xi_hat (valve deviation, before clamping).
VectorXd feedback_input(const MatrixXd& K, const VectorXd& xi_hat);

double clamp_valve(double v);
/// Opening actually applied at the actuators: clamp(bias + raw, 0, 1).
VectorXd apply_valves(const VectorXd& raw, const VectorXd& bias);

enum class DemandKind { kConstant, kTrimodal, kFault };

struct TrimodalParams {
  double night = 20.0;  // % baseline
  double morning_peak = 85.0;
  double morning_hour = 7.5;
  double day_peak = 45.0;
  double day_hour = 13.0;
  double evening_peak = 100.0;
  double evening_hour = 19.5;
  double width_hours = 1.6;
  double start_hour = 0.0;    // time of day at t = 0
  double day_length_s = 86400.0;  // simulated seconds per 24 h
};

struct DemandProfile {
  DemandKind kind = DemandKind::kConstant;
  DemandKind base = DemandKind::kConstant;  // base curve of a fault profile
  double level = 100.0;                     // constant level, %
  TrimodalParams trimodal;
  double leak = 30.0;  // % added during the fault window
  Seconds fault_start = 3000.0;
  Seconds fault_end = 6000.0;
};

/// Customer demand (out-valve opening, %). Constant and trimodal values lie
/// in [0, 100]; a fault profile adds its leak on top during the window.
double demand_at(const DemandProfile& profile, Seconds t);

/// Ornstein-Uhlenbeck fluctuation of relative demand, updated exactly.
class DemandNoise {
 public:
  DemandNoise(double stddev, double corr_time_s, RngStream stream);
  double advance(double dt);
  [[nodiscard]] double value() const { return x_; }

 private:
  double stddev_;
  double corr_time_;
  RngStream stream_;
  double x_ = 0.0;
};

/// max over trace of max(level - ref, 0) / ref * 100.
double overshoot_pct(std::span<const double> level_trace, double ref);
inline bool overshoot_critical(double pct) { return pct > 50.0; }

}  // namespace wacps::plant
