#pragma once

#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "wacps/sim_core.hpp"

namespace wacps::stability {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Augmented state is (xi, xi_hat, zeta): plant, controller-held estimate and
/// the sample buffered in the network between sampling and delivery.
struct AugmentedSystem {
  MatrixXd A;
  MatrixXd B;
  MatrixXd K;
  MatrixXd abar;  // [[A, BK, 0], [0, 0, 0], [0, 0, 0]]
  int n_s = 0;
  double sigma = 0.0;
  double rho = 1e-3;
  double h = 1.0;
  double tau_d = 0.0;
};

MatrixXd build_abar(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K);
AugmentedSystem build_augmented(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K,
                                double sigma, double rho, double h, double tau_d);

struct QForms {
  MatrixXd acute;  // (zeta - xi) vs sigma xi
  MatrixXd tilde;  // (xi_hat - xi) vs sigma xi
  MatrixXd hat;    // (xi_hat - zeta) vs sigma zeta
};
/// j is 1-based.
QForms build_quadratic_forms(double sigma, int j, int n_s);

struct JumpMaps {
  MatrixXd acute;  // sampling: zeta_J <- xi_J
  MatrixXd tilde;  // delivery: xi_hat_J <- zeta_J
};
/// Bit j-1 of `subset` set means state j is transmitted.
JumpMaps build_jump_maps(unsigned subset, int n_s);

/// e^{2 rho tau} e^{abar^T tau} p_end e^{abar tau}, symmetrised.
MatrixXd propagate_p(const MatrixXd& p_end, const MatrixXd& abar, double rho, double tau);

struct Multipliers {
  VectorXd acute_J, acute_Jc;
  VectorXd tilde_J, tilde_Jc;
  VectorXd hat_J, hat_Jc;

  static Multipliers constant(int n_s, double value);
};

struct StabilityCertificate {
  MatrixXd p0h;
  MatrixXd p1d;
  Multipliers mu;
};

struct Verification {
  bool feasible = false;
  double margin = -std::numeric_limits<double>::infinity();
  unsigned witness_subset = 0;  // subset attaining the margin
  int witness_lmi = 0;          // 1 or 2; 0 means P positivity
};

/// Checks both block inequalities for every transmit subset. Multiplier
/// terms enter as -mu_J Q for j in J and +mu_Jc Q for j outside J.
/// Throws std::invalid_argument for a malformed certificate (dimensions,
/// asymmetry above 1e-10, negative multipliers).
Verification verify_certificate(const StabilityCertificate& cert, const AugmentedSystem& sys,
                                double tol = 1e-9);

struct SearchOptions {
  int max_iters = 1500;
  double step0 = 0.05;
  double regularization = 1e-3;
  double accept_margin = 1e-6;  // after normalising trace(P0h) + trace(P1d) = 6 n_s
  std::optional<StabilityCertificate> seed;
};

struct SearchReport {
  int iterations = 0;
  double best_margin = -std::numeric_limits<double>::infinity();
};

/// Heuristic search: Lyapunov seed, log-grid multiplier scan, then projected
/// supergradient ascent on the verification margin. Returns the first
/// candidate with positive margin. Not finding one is inconclusive.
std::optional<StabilityCertificate> search_certificate(const AugmentedSystem& sys,
                                                       const SearchOptions& opts = {},
                                                       SearchReport* report = nullptr);

struct DelayFrontier {
  std::vector<double> tau;
  std::vector<bool> feasible;
  double max_tau = -1.0;  // -1 if nothing certified
  bool monotone = true;   // false if a re-search could not close a gap
};

/// Searches tau_d over `tau_grid` (sorted, within [0, h)); 0 is always tried
/// first. A gap below a certified point triggers a re-search seeded from the
/// larger delay's certificate.
DelayFrontier max_allowable_delay(const AugmentedSystem& sys, std::vector<double> tau_grid,
                                  const SearchOptions& opts = {});

struct CBounds {
  double c1 = 0.0;
  double c2 = 0.0;
};
/// Extremal eigenvalues of P1(tau), tau in [0, tau_d], and P0(tau), tau in
/// [0, h], on n_samples points each.
CBounds compute_c_bounds(const StabilityCertificate& cert, const AugmentedSystem& sys, int n_samples);

struct GesCheck {
  bool holds = false;
  double c = 0.0;                 // smallest envelope constant seen
  double violation_time = -1.0;   // first t where the envelope exceeded c_limit
};
/// `norms[i]` = |x(t[i])|. Finds the smallest c with |x(t)| <= c e^{-rho t} |x(0)|
/// over the trace; reports a violation when it would have to exceed c_limit.
GesCheck empirical_ges_check(const std::vector<double>& t, const std::vector<double>& norms,
                             double rho, double c_limit = std::numeric_limits<double>::infinity());

/// Spectral radius of the one-period map when every state transmits at every
/// sample: e^{abar (h - tau_d)} Jtilde_full e^{abar tau_d} Jacute_full.
double spectral_radius_oracle(const AugmentedSystem& sys);

struct Trajectory {
  std::vector<double> t;
  std::vector<double> norm;  // augmented state norm
  std::vector<double> events;  // transmissions per sample, aggregated
};

/// Event-triggered sampled-data loop with delivery delay tau_d, integrated
/// exactly with `substeps` points per period.
Trajectory simulate_dpetc(const AugmentedSystem& sys, const VectorXd& xi0, double horizon,
                          int substeps = 10);

}  // namespace wacps::stability
