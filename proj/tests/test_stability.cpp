#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "wacps/sim_core.hpp"
#include "wacps/stability.hpp"

namespace st = wacps::stability;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd m1(double v) { return MatrixXd::Constant(1, 1, v); }

st::AugmentedSystem scalar(double a, double b, double g, double sigma, double h, double tau) {
  return st::build_augmented(m1(a), m1(b), m1(g), sigma, 1e-3, h, tau);
}

// Random 2-state loop with a stabilising gain from pole placement on a
// controllable canonical pair.
st::AugmentedSystem random_loop(wacps::RngStream& rng, bool stable) {
  MatrixXd A(2, 2);
  A << 0.0, 1.0, rng.uniform_real(-1.0, 1.0), rng.uniform_real(-1.0, 1.0);
  MatrixXd B(2, 1);
  B << 0.0, 1.0;
  // Desired characteristic polynomial s^2 + c1 s + c0.
  const double p1 = rng.uniform_real(0.5, 1.5), p2 = rng.uniform_real(0.5, 1.5);
  double c0 = p1 * p2, c1 = p1 + p2;
  if (!stable) c1 = -rng.uniform_real(0.2, 1.0);
  MatrixXd K(1, 2);
  K << -c0 - A(1, 0), -c1 - A(1, 1);
  const double h = rng.uniform_real(0.05, 0.2);
  return st::build_augmented(A, B, K, rng.uniform_real(0.0, 0.05), 1e-3, h, rng.uniform_real(0.0, 0.3) * h);
}

}  // namespace

TEST(Stability, AbarBlocks) {
  const auto abar = st::build_abar(m1(-2.0), m1(3.0), m1(-0.5));
  MatrixXd want(3, 3);
  want << -2.0, -1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  EXPECT_TRUE(abar.isApprox(want));
  EXPECT_THROW(st::build_abar(m1(1.0), MatrixXd::Zero(2, 1), m1(1.0)), std::invalid_argument);
}

TEST(Stability, QuadraticFormsScalar) {
  const auto q = st::build_quadratic_forms(0.1, 1, 1);
  MatrixXd acute(3, 3), tilde(3, 3), hat(3, 3);
  acute << 0.99, 0, -1, 0, 0, 0, -1, 0, 1;
  tilde << 0.99, -1, 0, -1, 1, 0, 0, 0, 0;
  hat << 0, 0, 0, 0, 1, -1, 0, -1, 0.99;
  EXPECT_TRUE(q.acute.isApprox(acute, 1e-12));
  EXPECT_TRUE(q.tilde.isApprox(tilde, 1e-12));
  EXPECT_TRUE(q.hat.isApprox(hat, 1e-12));
  EXPECT_THROW(st::build_quadratic_forms(0.1, 0, 1), std::invalid_argument);
}

TEST(Stability, QuadraticFormMatchesTriggerRule) {
  // x^T Qtilde x = (xi_hat - xi)^2 - sigma^2 xi^2 on the selected state only.
  wacps::RngStream rng(3, 0);
  const auto q = st::build_quadratic_forms(0.2, 2, 3);
  for (int i = 0; i < 100; ++i) {
    VectorXd x(9);
    for (int k = 0; k < 9; ++k) x[k] = rng.normal(0.0, 1.0);
    const double want = std::pow(x[4] - x[1], 2) - 0.04 * x[1] * x[1];
    EXPECT_NEAR(x.dot(q.tilde * x), want, 1e-12);
    const double want_hat = std::pow(x[4] - x[7], 2) - 0.04 * x[7] * x[7];
    EXPECT_NEAR(x.dot(q.hat * x), want_hat, 1e-12);
  }
}

TEST(Stability, JumpMapsEmptyAndFull) {
  const auto none = st::build_jump_maps(0U, 2);
  EXPECT_TRUE(none.acute.isIdentity());
  EXPECT_TRUE(none.tilde.isIdentity());
  const auto full = st::build_jump_maps(3U, 2);
  VectorXd x(6);
  x << 1, 2, 3, 4, 5, 6;
  VectorXd after_sample(6), after_delivery(6);
  after_sample << 1, 2, 3, 4, 1, 2;
  after_delivery << 1, 2, 5, 6, 5, 6;
  EXPECT_TRUE((full.acute * x).isApprox(after_sample));
  EXPECT_TRUE((full.tilde * x).isApprox(after_delivery));
  EXPECT_THROW(st::build_jump_maps(4U, 2), std::invalid_argument);
}

TEST(Stability, PropagatePClosedForm) {
  // Scalar Abar block: e^{2 rho t} e^{2 a t} p for the xi entry.
  const auto abar = st::build_abar(m1(-0.7), m1(1.0), m1(0.0));
  MatrixXd p = MatrixXd::Identity(3, 3);
  const auto out = st::propagate_p(p, abar, 0.01, 0.3);
  EXPECT_NEAR(out(0, 0), std::exp(2 * 0.01 * 0.3) * std::exp(-2 * 0.7 * 0.3), 1e-12);
  EXPECT_NEAR(out(1, 1), std::exp(2 * 0.01 * 0.3), 1e-12);
  EXPECT_TRUE(out.isApprox(out.transpose()));
}

TEST(Stability, ScalarBenchmarkCertified) {
  const auto sys = scalar(1.0, 1.0, -2.0, 0.0, 0.1, 0.0);
  EXPECT_NEAR(st::spectral_radius_oracle(sys), 2.0 - std::exp(0.1), 1e-9);
  st::SearchReport rep;
  const auto cert = st::search_certificate(sys, {}, &rep);
  ASSERT_TRUE(cert.has_value()) << "best margin " << rep.best_margin;
  const auto v = st::verify_certificate(*cert, sys);
  EXPECT_TRUE(v.feasible);
  EXPECT_GT(v.margin, 1e-9);
}

TEST(Stability, ZeroGainNeverCertified) {
  const auto sys = scalar(1.0, 1.0, 0.0, 0.0, 0.1, 0.0);
  EXPECT_GT(st::spectral_radius_oracle(sys), 1.0);
  EXPECT_FALSE(st::search_certificate(sys).has_value());
}

TEST(Stability, VerifyRejectsMalformed) {
  const auto sys = scalar(1.0, 1.0, -2.0, 0.0, 0.1, 0.0);
  st::StabilityCertificate c{MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), st::Multipliers::constant(1, 0.1)};
  EXPECT_NO_THROW(st::verify_certificate(c, sys));
  auto neg = c;
  neg.mu.hat_Jc[0] = -1e-3;
  EXPECT_THROW(st::verify_certificate(neg, sys), std::invalid_argument);
  auto asym = c;
  asym.p0h(0, 1) = 1e-3;
  EXPECT_THROW(st::verify_certificate(asym, sys), std::invalid_argument);
  auto dims = c;
  dims.p1d = MatrixXd::Identity(2, 2);
  EXPECT_THROW(st::verify_certificate(dims, sys), std::invalid_argument);
}

TEST(Stability, SearchNeedsStates) {
  st::AugmentedSystem empty;
  EXPECT_THROW(st::search_certificate(empty), std::invalid_argument);
}

TEST(Stability, SchurComplementAgreesWithScalarisedJump) {
  // Block LMI 1 is positive definite iff
  //   x^T Jacute^T e^{Abar^T tau} P1d e^{Abar tau} Jacute x < x^T (alpha P0h + G1) x
  // for all x; sample random x for a feasible and an infeasible candidate.
  const auto sys = scalar(1.0, 1.0, -2.0, 0.0, 0.1, 0.03);
  auto cert = st::search_certificate(sys);
  ASSERT_TRUE(cert.has_value());
  wacps::RngStream rng(11, 0);
  const MatrixXd e1 = (sys.abar * sys.tau_d).exp();
  const double alpha = std::exp(-2.0 * sys.rho * sys.tau_d);
  for (unsigned subset : {0U, 1U}) {
    const auto jm = st::build_jump_maps(subset, 1);
    const auto q = st::build_quadratic_forms(sys.sigma, 1, 1);
    const MatrixXd g1 = subset ? MatrixXd(-(cert->mu.acute_J[0] * q.acute + cert->mu.tilde_J[0] * q.tilde))
                               : MatrixXd(cert->mu.acute_Jc[0] * q.acute + cert->mu.tilde_Jc[0] * q.tilde);
    const MatrixXd lhs = (e1 * jm.acute).transpose() * cert->p1d * (e1 * jm.acute);
    const MatrixXd rhs = alpha * cert->p0h + g1;
    for (int i = 0; i < 10000; ++i) {
      VectorXd x(3);
      for (int k = 0; k < 3; ++k) x[k] = rng.normal(0.0, 1.0);
      ASSERT_LT(x.dot(lhs * x), x.dot(rhs * x));
    }
    // Shrinking P0h breaks the block inequality and some direction violates.
    const MatrixXd bad = 0.05 * alpha * cert->p0h + g1 - lhs;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (bad + bad.transpose()));
    const VectorXd w = es.eigenvectors().col(0);
    EXPECT_LT(es.eigenvalues()[0], 0.0);
    EXPECT_GE(w.dot(lhs * w), w.dot((0.05 * alpha * cert->p0h + g1) * w));
  }
}

TEST(Stability, CBoundsBracketLyapunovFunction) {
  const auto sys = scalar(1.0, 1.0, -2.0, 0.05, 0.1, 0.02);
  const auto cert = st::search_certificate(sys);
  ASSERT_TRUE(cert.has_value());
  const auto b = st::compute_c_bounds(*cert, sys, 50);
  EXPECT_GT(b.c1, 0.0);
  EXPECT_GE(b.c2, b.c1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cert->p0h);
  EXPECT_LE(b.c1, es.eigenvalues()[0] + 1e-12);
  EXPECT_GE(b.c2, es.eigenvalues()[2] - 1e-12);
}

TEST(Stability, GesCheckTrivialCases) {
  std::vector<double> t{0, 1, 2, 3}, decaying{1.0, 0.5, 0.25, 0.125}, growing{1.0, 2.0, 4.0, 8.0};
  const auto ok = st::empirical_ges_check(t, decaying, 0.1, 2.0);
  EXPECT_TRUE(ok.holds);
  EXPECT_NEAR(ok.c, 1.0, 1e-12);
  const auto bad = st::empirical_ges_check(t, growing, 0.1, 3.0);
  EXPECT_FALSE(bad.holds);
  EXPECT_DOUBLE_EQ(bad.violation_time, 2.0);
}

TEST(Stability, CertifiedSystemsSatisfyOracleAndEnvelope) {
  wacps::RngStream rng(2024, 7);
  int certified = 0;
  for (int i = 0; i < 8; ++i) {
    const auto sys = random_loop(rng, true);
    const auto cert = st::search_certificate(sys);
    if (!cert) continue;
    ++certified;
    EXPECT_LT(st::spectral_radius_oracle(sys), 1.0);
    const auto b = st::compute_c_bounds(*cert, sys, 40);
    const double c = std::sqrt(b.c2 / b.c1);
    for (int k = 0; k < 10; ++k) {
      VectorXd x0(2);
      x0 << rng.normal(0.0, 1.0), rng.normal(0.0, 1.0);
      const auto tr = st::simulate_dpetc(sys, x0, 20.0);
      EXPECT_TRUE(st::empirical_ges_check(tr.t, tr.norm, sys.rho, c * (1.0 + 1e-9)).holds);
    }
  }
  EXPECT_GE(certified, 4);
}

TEST(Stability, UnstableLoopsRejected) {
  wacps::RngStream rng(99, 1);
  for (int i = 0; i < 4; ++i) {
    const auto sys = random_loop(rng, false);
    EXPECT_GT(st::spectral_radius_oracle(sys), 1.0);
    st::SearchOptions o;
    o.max_iters = 300;
    EXPECT_FALSE(st::search_certificate(sys, o).has_value());
  }
}

TEST(Stability, DelayFrontierMonotone) {
  const auto sys = scalar(1.0, 1.0, -2.0, 0.0, 0.2, 0.0);
  const auto f = st::max_allowable_delay(sys, {0.02, 0.05, 0.1, 0.15, 0.19});
  EXPECT_TRUE(f.monotone);
  EXPECT_GE(f.max_tau, 0.0);
  bool seen_gap = false;
  for (std::size_t i = 0; i < f.tau.size(); ++i) {
    if (!f.feasible[i]) seen_gap = true;
    if (seen_gap) EXPECT_FALSE(f.feasible[i]) << "tau " << f.tau[i];
  }
}
