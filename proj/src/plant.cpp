#include "wacps/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace wacps::plant {

void SubsystemModel::validate() const {
  const int nn = n();
  if (nn < 1) throw PlantModelError("subsystem has no states");
  if (A.cols() != nn || B.rows() != nn || K.rows() != m() || K.cols() != nn) {
    throw PlantModelError("A, B, K dimensions disagree");
  }
  if (ref_levels.size() != nn || tank_height.size() != nn || v_bias.size() != m() ||
      initial_levels.size() != nn || demand_gain.size() != nn) {
    throw PlantModelError("per-tank vectors have wrong length");
  }
  if (!(h > 0.0)) throw PlantModelError("h must be positive");
  if (!(sigma >= 0.0 && sigma < 1.0)) throw PlantModelError("sigma must be in [0,1)");
  if (!(tau_d >= 0.0 && tau_d < h)) throw PlantModelError("tau_d must be in [0,h)");
  const Eigen::VectorXcd eig = (A + B * K).eigenvalues();
  for (int i = 0; i < eig.size(); ++i) {
    if (!(eig[i].real() < 0.0)) {
      std::ostringstream os;
      os << "A + BK is not Hurwitz; eigenvalues:";
      for (int j = 0; j < eig.size(); ++j) os << ' ' << eig[j];
      throw PlantModelError(os.str());
    }
  }
}

double scalar_lq_gain(double a, double b, double q, double r) {
  // Riccati: 2 a p - b^2 p^2 / r + q = 0, positive root; u = -(b p / r) x.
  const double p = (a + std::sqrt(a * a + b * b * q / r)) * r / (b * b);
  return -b * p / r;
}

SubsystemModel build_dma_plant(int n_tanks, std::span<const TankParams> tanks,
                               const LqWeights& weights) {
  if (n_tanks != 3 && n_tanks != 4) throw PlantModelError("a DMA has 3 or 4 tanks");
  if (static_cast<int>(tanks.size()) != n_tanks) throw PlantModelError("need one TankParams per tank");
  if (!(weights.q > 0.0 && weights.r > 0.0)) throw PlantModelError("LQ weights must be positive");
  SubsystemModel m;
  m.A = MatrixXd::Zero(n_tanks, n_tanks);
  m.B = MatrixXd::Zero(n_tanks, n_tanks);
  m.K = MatrixXd::Zero(n_tanks, n_tanks);
  m.ref_levels.resize(n_tanks);
  m.tank_height.resize(n_tanks);
  m.v_bias.resize(n_tanks);
  m.initial_levels.resize(n_tanks);
  m.demand_gain.resize(n_tanks);
  for (int j = 0; j < n_tanks; ++j) {
    const auto& t = tanks[static_cast<std::size_t>(j)];
    if (!(t.a >= 0.0)) throw PlantModelError("tank " + std::to_string(j) + ": a must be >= 0");
    if (!(t.beta > 0.0)) {
      throw PlantModelError("tank " + std::to_string(j) + ": beta must be positive (uncontrollable)");
    }
    if (!(t.ref_level > 0.0 && t.tank_height > t.ref_level)) {
      throw PlantModelError("tank " + std::to_string(j) + ": need 0 < ref_level < tank_height");
    }
    m.A(j, j) = -t.a;
    m.B(j, j) = t.beta;
    m.K(j, j) = scalar_lq_gain(-t.a, t.beta, weights.q, weights.r);
    m.ref_levels[j] = t.ref_level;
    m.tank_height[j] = t.tank_height;
    m.v_bias[j] = t.v_eq;
    m.initial_levels[j] = t.initial_level;
    // Demand above design drains the tank at the rate the feedforward supplies.
    m.demand_gain[j] = -t.beta * t.v_eq;
  }
  m.validate();
  return m;
}

Zoh discretize(const MatrixXd& A, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Eigen::Index n = A.rows();
  // exp([[A, I], [0, 0]] dt) = [[Ad, Gd], [0, I]]
  MatrixXd M = MatrixXd::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = A * dt;
  M.topRightCorner(n, n) = MatrixXd::Identity(n, n) * dt;
  const MatrixXd phi = M.exp();
  return {phi.topLeftCorner(n, n), phi.topRightCorner(n, n), dt};
}

PlantState integrate_step(const SubsystemModel& model, const Zoh& zoh, const PlantState& state,
                          const VectorXd& disturbance) {
  const VectorXd u = model.B * (state.v - model.v_bias) + disturbance;
  PlantState next = state;
  next.xi = zoh.Ad * state.xi + zoh.Gd * u;
  next.t = state.t + zoh.dt;
  if (!next.xi.allFinite()) {
    std::ostringstream os;
    os << "plant state diverged at t=" << next.t;
    throw DivergenceError(os.str());
  }
  return next;
}

PlantState integrate_step(const SubsystemModel& model, const PlantState& state,
                          const VectorXd& disturbance, double dt) {
  return integrate_step(model, discretize(model.A, dt), state, disturbance);
}

bool event_check(double xi, double xi_hat, double sigma) {
  return std::abs(xi_hat - xi) - sigma * std::abs(xi) > 0.0;
}

VectorXd holder_update(const VectorXd& xi_hat, const VectorXd& xi_sampled,
                       const std::vector<bool>& flags) {
  if (xi_hat.size() != xi_sampled.size() || static_cast<Eigen::Index>(flags.size()) != xi_hat.size()) {
    throw std::invalid_argument("holder_update: dimension mismatch");
  }
  VectorXd out = xi_hat;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    if (flags[static_cast<std::size_t>(j)]) out[j] = xi_sampled[j];
  }
  return out;
}

VectorXd feedback_input(const MatrixXd& K, const VectorXd& xi_hat) {
  if (K.cols() != xi_hat.size()) throw std::invalid_argument("feedback_input: dimension mismatch");
  return K * xi_hat;
}

double clamp_valve(double v) { return std::clamp(v, 0.0, 1.0); }

VectorXd apply_valves(const VectorXd& raw, const VectorXd& bias) {
  if (raw.size() != bias.size()) throw std::invalid_argument("apply_valves: dimension mismatch");
  VectorXd v(raw.size());
  for (Eigen::Index j = 0; j < raw.size(); ++j) v[j] = clamp_valve(bias[j] + raw[j]);
  return v;
}

namespace {

double trimodal_at(const TrimodalParams& p, Seconds t) {
  const double hours_per_s = 24.0 / p.day_length_s;
  const double tod = std::fmod(p.start_hour + t * hours_per_s, 24.0);
  auto bump = [&](double centre, double amp) {
    double d = std::abs(tod - centre);
    d = std::min(d, 24.0 - d);
    return amp * std::exp(-0.5 * d * d / (p.width_hours * p.width_hours));
  };
  const double v = p.night + bump(p.morning_hour, p.morning_peak - p.night) +
                   bump(p.day_hour, p.day_peak - p.night) +
                   bump(p.evening_hour, p.evening_peak - p.night);
  return std::clamp(v, 0.0, 100.0);
}

double base_at(DemandKind kind, const DemandProfile& p, Seconds t) {
  switch (kind) {
    case DemandKind::kConstant:
      return std::clamp(p.level, 0.0, 100.0);
    case DemandKind::kTrimodal:
      return trimodal_at(p.trimodal, t);
    case DemandKind::kFault:
      break;
  }
  throw std::invalid_argument("fault profile cannot be its own base");
}

}  // namespace

double demand_at(const DemandProfile& profile, Seconds t) {
  if (t < 0.0) throw std::invalid_argument("demand_at: t must be >= 0");
  if (profile.kind != DemandKind::kFault) return base_at(profile.kind, profile, t);
  const double base = base_at(profile.base, profile, t);
  return (t >= profile.fault_start && t < profile.fault_end) ? base + profile.leak : base;
}

DemandNoise::DemandNoise(double stddev, double corr_time_s, RngStream stream)
    : stddev_(stddev), corr_time_(corr_time_s), stream_(stream) {
  if (stddev < 0.0 || !(corr_time_s > 0.0)) throw std::invalid_argument("bad demand noise parameters");
  if (stddev_ > 0.0) x_ = stream_.normal(0.0, stddev_);
}

double DemandNoise::advance(double dt) {
  if (stddev_ == 0.0) return 0.0;
  const double phi = std::exp(-dt / corr_time_);
  x_ = phi * x_ + stddev_ * std::sqrt(1.0 - phi * phi) * stream_.normal(0.0, 1.0);
  return x_;
}

double overshoot_pct(std::span<const double> level_trace, double ref) {
  if (level_trace.empty()) throw std::invalid_argument("overshoot_pct: empty trace");
  if (!(ref > 0.0)) throw std::invalid_argument("overshoot_pct: ref must be positive");
  double worst = 0.0;
  for (double l : level_trace) worst = std::max(worst, l - ref);
  return worst / ref * 100.0;
}

}  // namespace wacps::plant
