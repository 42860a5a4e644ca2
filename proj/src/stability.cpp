#include "wacps/stability.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace wacps::stability {

namespace {

bool in_subset(unsigned subset, int j0) { return ((subset >> j0) & 1U) != 0U; }

void check_multiplier(const VectorXd& v, int n_s, const char* name) {
  if (v.size() != n_s) throw std::invalid_argument(std::string("multiplier ") + name + " has wrong length");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0)) {
      throw std::invalid_argument(std::string("multiplier ") + name + "[" + std::to_string(i) +
                                  "] is negative");
    }
  }
}

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Everything that does not depend on the certificate, computed once.
struct Prepared {
  int n_s = 0;
  int dim = 0;
  double alpha1 = 1.0;  // e^{-2 rho tau_d}
  double alpha2 = 1.0;  // e^{-2 rho (h - tau_d)}
  MatrixXd e1;          // e^{abar tau_d}
  MatrixXd e2;          // e^{abar (h - tau_d)}
  std::vector<QForms> q;
  std::vector<JumpMaps> jumps;  // indexed by subset
};

Prepared prepare(const AugmentedSystem& sys) {
  if (sys.n_s < 1) throw std::invalid_argument("system has no states");
  if (sys.n_s > 16) throw std::invalid_argument("subset enumeration limited to 16 states");
  if (!(sys.h > 0.0) || !(sys.tau_d >= 0.0 && sys.tau_d < sys.h)) {
    throw std::invalid_argument("need h > 0 and 0 <= tau_d < h");
  }
  Prepared p;
  p.n_s = sys.n_s;
  p.dim = 3 * sys.n_s;
  p.alpha1 = std::exp(-2.0 * sys.rho * sys.tau_d);
  p.alpha2 = std::exp(-2.0 * sys.rho * (sys.h - sys.tau_d));
  p.e1 = (sys.abar * sys.tau_d).exp();
  p.e2 = (sys.abar * (sys.h - sys.tau_d)).exp();
  for (int j = 1; j <= sys.n_s; ++j) p.q.push_back(build_quadratic_forms(sys.sigma, j, sys.n_s));
  const unsigned n_sub = 1U << sys.n_s;
  for (unsigned s = 0; s < n_sub; ++s) p.jumps.push_back(build_jump_maps(s, sys.n_s));
  return p;
}

struct Lmis {
  MatrixXd m1;
  MatrixXd m2;
};

Lmis assemble(const Prepared& pr, const StabilityCertificate& c, unsigned subset) {
  const int d = pr.dim;
  MatrixXd g1 = MatrixXd::Zero(d, d);
  MatrixXd g2 = MatrixXd::Zero(d, d);
  for (int j = 0; j < pr.n_s; ++j) {
    const auto& q = pr.q[static_cast<std::size_t>(j)];
    if (in_subset(subset, j)) {
      g1 -= c.mu.acute_J[j] * q.acute + c.mu.tilde_J[j] * q.tilde;
      g2 -= c.mu.hat_J[j] * q.hat;
    } else {
      g1 += c.mu.acute_Jc[j] * q.acute + c.mu.tilde_Jc[j] * q.tilde;
      g2 += c.mu.hat_Jc[j] * q.hat;
    }
  }
  const auto& jm = pr.jumps[subset];
  Lmis out{MatrixXd(2 * d, 2 * d), MatrixXd(2 * d, 2 * d)};
  const MatrixXd off1 = c.p1d * pr.e1 * jm.acute;
  out.m1 << pr.alpha1 * c.p0h + g1, off1.transpose(), off1, c.p1d;
  const MatrixXd off2 = c.p0h * pr.e2 * jm.tilde;
  out.m2 << pr.alpha2 * c.p1d + g2, off2.transpose(), off2, c.p0h;
  return out;
}

struct MinEig {
  double value;
  VectorXd vec;
};

MinEig min_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(m));
  return {es.eigenvalues()[0], es.eigenvectors().col(0)};
}

void validate_certificate(const StabilityCertificate& c, int n_s) {
  const int d = 3 * n_s;
  if (c.p0h.rows() != d || c.p0h.cols() != d || c.p1d.rows() != d || c.p1d.cols() != d) {
    throw std::invalid_argument("certificate matrices must be " + std::to_string(d) + "x" + std::to_string(d));
  }
  if (!c.p0h.allFinite() || !c.p1d.allFinite()) throw std::invalid_argument("certificate is not finite");
  if ((c.p0h - c.p0h.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
      (c.p1d - c.p1d.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("certificate matrices must be symmetric");
  }
  check_multiplier(c.mu.acute_J, n_s, "acute_J");
  check_multiplier(c.mu.acute_Jc, n_s, "acute_Jc");
  check_multiplier(c.mu.tilde_J, n_s, "tilde_J");
  check_multiplier(c.mu.tilde_Jc, n_s, "tilde_Jc");
  check_multiplier(c.mu.hat_J, n_s, "hat_J");
  check_multiplier(c.mu.hat_Jc, n_s, "hat_Jc");
}

Verification verify_prepared(const Prepared& pr, const StabilityCertificate& c, double tol) {
  Verification v;
  v.margin = std::numeric_limits<double>::infinity();
  for (unsigned s = 0; s < pr.jumps.size(); ++s) {
    const auto l = assemble(pr, c, s);
    const double e1 = min_eig(l.m1).value;
    const double e2 = min_eig(l.m2).value;
    if (e1 < v.margin) v = {false, e1, s, 1};
    if (e2 < v.margin) v = {false, e2, s, 2};
  }
  v.feasible = v.margin > tol;
  return v;
}

// Smith doubling for Y = sum_k (M^T)^k M^k; empty if it does not converge.
std::optional<MatrixXd> discrete_lyapunov(const MatrixXd& m) {
  MatrixXd y = MatrixXd::Identity(m.rows(), m.cols());
  MatrixXd a = m;
  for (int i = 0; i < 64; ++i) {
    y += a.transpose() * y * a;
    a = a * a;
    if (!y.allFinite()) return std::nullopt;
    if (a.cwiseAbs().maxCoeff() < 1e-14) return sym(y);
  }
  return std::nullopt;
}

void normalize(StabilityCertificate& c, double target) {
  const double tr = c.p0h.trace() + c.p1d.trace();
  if (!(tr > 0.0)) return;
  const double s = target / tr;
  c.p0h *= s;
  c.p1d *= s;
  for (VectorXd* v : {&c.mu.acute_J, &c.mu.acute_Jc, &c.mu.tilde_J, &c.mu.tilde_Jc, &c.mu.hat_J, &c.mu.hat_Jc}) {
    *v *= s;
  }
}

StabilityCertificate seed_certificate(const AugmentedSystem& sys, const Prepared& pr, double reg) {
  const int d = pr.dim;
  StabilityCertificate c;
  c.mu = Multipliers::constant(sys.n_s, 0.0);
  // Lyapunov function of the all-transmit period map, taken just before sampling.
  const auto& full = pr.jumps.back();
  const MatrixXd mono = std::exp(sys.rho * sys.h) * pr.e2 * full.tilde * pr.e1 * full.acute;
  const auto y = discrete_lyapunov(mono);
  c.p0h = y ? *y : MatrixXd::Identity(d, d);
  c.p0h += reg * c.p0h.trace() / d * MatrixXd::Identity(d, d);
  const MatrixXd p0d = std::exp(2.0 * sys.rho * (sys.h - sys.tau_d)) * pr.e2.transpose() * c.p0h * pr.e2;
  c.p1d = sym(full.tilde.transpose() * p0d * full.tilde);
  c.p1d += reg * c.p1d.trace() / d * MatrixXd::Identity(d, d);
  c.p0h = sym(c.p0h);
  normalize(c, 2.0 * d);
  return c;
}

void set_multipliers(StabilityCertificate& c, double v) {
  const int n = static_cast<int>(c.mu.acute_J.size());
  c.mu = Multipliers::constant(n, v);
}

// One supergradient of the worst constraint.
struct Gradient {
  MatrixXd p0h, p1d;
  Multipliers mu;
};

Gradient supergradient(const Prepared& pr, const StabilityCertificate& c, const Verification& v) {
  const int d = pr.dim;
  Gradient g{MatrixXd::Zero(d, d), MatrixXd::Zero(d, d), Multipliers::constant(pr.n_s, 0.0)};
  const auto l = assemble(pr, c, v.witness_subset);
  const auto& jm = pr.jumps[v.witness_subset];
  const auto e = min_eig(v.witness_lmi == 1 ? l.m1 : l.m2);
  const VectorXd a = e.vec.head(d);
  const VectorXd b = e.vec.tail(d);
  if (v.witness_lmi == 1) {
    const VectorXd ea = pr.e1 * jm.acute * a;
    g.p0h = pr.alpha1 * a * a.transpose();
    g.p1d = ea * b.transpose() + b * ea.transpose() + b * b.transpose();
  } else {
    const VectorXd ea = pr.e2 * jm.tilde * a;
    g.p1d = pr.alpha2 * a * a.transpose();
    g.p0h = ea * b.transpose() + b * ea.transpose() + b * b.transpose();
  }
  for (int j = 0; j < pr.n_s; ++j) {
    const auto& q = pr.q[static_cast<std::size_t>(j)];
    const bool in = in_subset(v.witness_subset, j);
    if (v.witness_lmi == 1) {
      const double qa = a.dot(q.acute * a);
      const double qt = a.dot(q.tilde * a);
      if (in) {
        g.mu.acute_J[j] = -qa;
        g.mu.tilde_J[j] = -qt;
      } else {
        g.mu.acute_Jc[j] = qa;
        g.mu.tilde_Jc[j] = qt;
      }
    } else {
      const double qh = a.dot(q.hat * a);
      if (in) {
        g.mu.hat_J[j] = -qh;
      } else {
        g.mu.hat_Jc[j] = qh;
      }
    }
  }
  return g;
}

double grad_norm(const Gradient& g) {
  double s = g.p0h.squaredNorm() + g.p1d.squaredNorm();
  for (const VectorXd* v : {&g.mu.acute_J, &g.mu.acute_Jc, &g.mu.tilde_J, &g.mu.tilde_Jc, &g.mu.hat_J,
                            &g.mu.hat_Jc}) {
    s += v->squaredNorm();
  }
  return std::sqrt(s);
}

void ascend(StabilityCertificate& c, const Gradient& g, double step) {
  c.p0h = sym(c.p0h + step * g.p0h);
  c.p1d = sym(c.p1d + step * g.p1d);
  auto upd = [step](VectorXd& x, const VectorXd& dx) { x = (x + step * dx).cwiseMax(0.0); };
  upd(c.mu.acute_J, g.mu.acute_J);
  upd(c.mu.acute_Jc, g.mu.acute_Jc);
  upd(c.mu.tilde_J, g.mu.tilde_J);
  upd(c.mu.tilde_Jc, g.mu.tilde_Jc);
  upd(c.mu.hat_J, g.mu.hat_J);
  upd(c.mu.hat_Jc, g.mu.hat_Jc);
}

}  // namespace

MatrixXd build_abar(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || K.rows() != B.cols() || K.cols() != n) {
    throw std::invalid_argument("build_abar: A, B, K dimensions disagree");
  }
  MatrixXd abar = MatrixXd::Zero(3 * n, 3 * n);
  abar.topLeftCorner(n, n) = A;
  abar.block(0, n, n, n) = B * K;
  return abar;
}

AugmentedSystem build_augmented(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K, double sigma,
                                double rho, double h, double tau_d) {
  if (!(sigma >= 0.0 && sigma < 1.0)) throw std::invalid_argument("sigma must be in [0,1)");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(h > 0.0)) throw std::invalid_argument("h must be positive");
  if (!(tau_d >= 0.0 && tau_d < h)) throw std::invalid_argument("tau_d must be in [0,h)");
  AugmentedSystem s;
  s.abar = build_abar(A, B, K);
  s.A = A;
  s.B = B;
  s.K = K;
  s.n_s = static_cast<int>(A.rows());
  s.sigma = sigma;
  s.rho = rho;
  s.h = h;
  s.tau_d = tau_d;
  return s;
}

QForms build_quadratic_forms(double sigma, int j, int n_s) {
  if (j < 1 || j > n_s) throw std::invalid_argument("state index out of range");
  const int d = 3 * n_s;
  const int x = j - 1, xh = n_s + j - 1, z = 2 * n_s + j - 1;
  const double g = 1.0 - sigma * sigma;
  QForms q{MatrixXd::Zero(d, d), MatrixXd::Zero(d, d), MatrixXd::Zero(d, d)};
  q.acute(x, x) = g;
  q.acute(x, z) = q.acute(z, x) = -1.0;
  q.acute(z, z) = 1.0;
  q.tilde(x, x) = g;
  q.tilde(x, xh) = q.tilde(xh, x) = -1.0;
  q.tilde(xh, xh) = 1.0;
  q.hat(xh, xh) = 1.0;
  q.hat(xh, z) = q.hat(z, xh) = -1.0;
  q.hat(z, z) = g;
  return q;
}

JumpMaps build_jump_maps(unsigned subset, int n_s) {
  if (n_s < 1) throw std::invalid_argument("n_s must be >= 1");
  if (n_s < 32 && (subset >> n_s) != 0U) throw std::invalid_argument("subset has bits beyond n_s");
  const int d = 3 * n_s;
  JumpMaps m{MatrixXd::Identity(d, d), MatrixXd::Identity(d, d)};
  for (int j = 0; j < n_s; ++j) {
    if (!in_subset(subset, j)) continue;
    const int x = j, xh = n_s + j, z = 2 * n_s + j;
    m.acute(z, z) = 0.0;
    m.acute(z, x) = 1.0;
    m.tilde(xh, xh) = 0.0;
    m.tilde(xh, z) = 1.0;
  }
  return m;
}

MatrixXd propagate_p(const MatrixXd& p_end, const MatrixXd& abar, double rho, double tau) {
  const MatrixXd e = (abar * tau).exp();
  return sym(std::exp(2.0 * rho * tau) * e.transpose() * p_end * e);
}

Multipliers Multipliers::constant(int n_s, double value) {
  const VectorXd v = VectorXd::Constant(n_s, value);
  return {v, v, v, v, v, v};
}

Verification verify_certificate(const StabilityCertificate& cert, const AugmentedSystem& sys, double tol) {
  const auto pr = prepare(sys);
  validate_certificate(cert, sys.n_s);
  return verify_prepared(pr, cert, tol);
}

std::optional<StabilityCertificate> search_certificate(const AugmentedSystem& sys, const SearchOptions& opts,
                                                       SearchReport* report) {
  if (sys.n_s < 1) throw std::invalid_argument("search_certificate: no states");
  const auto pr = prepare(sys);
  const double target = 2.0 * pr.dim;
  SearchReport rep;

  std::vector<StabilityCertificate> starts;
  if (opts.seed) {
    validate_certificate(*opts.seed, sys.n_s);
    starts.push_back(*opts.seed);
    normalize(starts.back(), target);
  }
  const auto base = seed_certificate(sys, pr, opts.regularization);
  // Log grid over a common multiplier value; keep the best start.
  StabilityCertificate best = base;
  Verification best_v = verify_prepared(pr, best, 0.0);
  for (double mu = 1e-3; mu <= 1e3; mu *= std::sqrt(10.0)) {
    auto c = base;
    set_multipliers(c, mu * target / pr.dim);
    normalize(c, target);
    const auto v = verify_prepared(pr, c, 0.0);
    if (v.margin > best_v.margin) {
      best = c;
      best_v = v;
    }
  }
  for (const auto& s : starts) {
    const auto v = verify_prepared(pr, s, 0.0);
    if (v.margin > best_v.margin) {
      best = s;
      best_v = v;
    }
  }

  auto cur = best;
  auto cur_v = best_v;
  int it = 0;
  for (; it < opts.max_iters && !(best_v.margin > opts.accept_margin); ++it) {
    const auto g = supergradient(pr, cur, cur_v);
    const double gn = grad_norm(g);
    if (!(gn > 0.0)) break;
    ascend(cur, g, opts.step0 * target / std::sqrt(1.0 + it) / gn);
    normalize(cur, target);
    cur_v = verify_prepared(pr, cur, 0.0);
    if (cur_v.margin > best_v.margin) {
      best = cur;
      best_v = cur_v;
    }
  }
  rep.iterations = it;
  rep.best_margin = best_v.margin;
  if (report) *report = rep;
  if (best_v.margin > opts.accept_margin) return best;
  return std::nullopt;
}

DelayFrontier max_allowable_delay(const AugmentedSystem& sys, std::vector<double> tau_grid,
                                  const SearchOptions& opts) {
  tau_grid.push_back(0.0);
  std::sort(tau_grid.begin(), tau_grid.end());
  tau_grid.erase(std::unique(tau_grid.begin(), tau_grid.end()), tau_grid.end());
  for (double t : tau_grid) {
    if (!(t >= 0.0 && t < sys.h)) throw std::invalid_argument("tau grid must lie in [0, h)");
  }
  DelayFrontier f;
  std::vector<std::optional<StabilityCertificate>> certs;
  for (double t : tau_grid) {
    auto s = sys;
    s.tau_d = t;
    certs.push_back(search_certificate(s, opts));
    f.tau.push_back(t);
    f.feasible.push_back(certs.back().has_value());
  }
  // Certification at a larger delay should imply it at smaller ones; retry gaps
  // from the nearest certified larger delay.
  for (std::size_t i = tau_grid.size(); i-- > 0;) {
    if (f.feasible[i]) continue;
    std::optional<StabilityCertificate> above;
    for (std::size_t j = i + 1; j < tau_grid.size(); ++j) {
      if (certs[j]) {
        above = certs[j];
        break;
      }
    }
    if (!above) continue;
    auto s = sys;
    s.tau_d = tau_grid[i];
    auto o = opts;
    o.seed = above;
    certs[i] = search_certificate(s, o);
    f.feasible[i] = certs[i].has_value();
    if (!f.feasible[i]) f.monotone = false;
  }
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (f.feasible[i]) f.max_tau = tau_grid[i];
  }
  return f;
}

CBounds compute_c_bounds(const StabilityCertificate& cert, const AugmentedSystem& sys, int n_samples) {
  if (n_samples < 2) throw std::invalid_argument("need at least 2 samples");
  validate_certificate(cert, sys.n_s);
  CBounds b{std::numeric_limits<double>::infinity(), 0.0};
  auto scan = [&](const MatrixXd& p_end, double t_end) {
    for (int i = 0; i < n_samples; ++i) {
      const double tau = t_end * i / (n_samples - 1);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(propagate_p(p_end, sys.abar, sys.rho, t_end - tau),
                                                 Eigen::EigenvaluesOnly);
      b.c1 = std::min(b.c1, es.eigenvalues()[0]);
      b.c2 = std::max(b.c2, es.eigenvalues()[es.eigenvalues().size() - 1]);
    }
  };
  scan(cert.p1d, sys.tau_d);
  scan(cert.p0h, sys.h);
  return b;
}

GesCheck empirical_ges_check(const std::vector<double>& t, const std::vector<double>& norms, double rho,
                             double c_limit) {
  if (t.size() != norms.size() || t.empty()) throw std::invalid_argument("trace is empty or ragged");
  if (!(norms[0] > 0.0)) throw std::invalid_argument("initial norm must be positive");
  GesCheck g;
  g.holds = true;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ratio = norms[i] * std::exp(rho * (t[i] - t[0])) / norms[0];
    if (!std::isfinite(ratio) || ratio > c_limit) {
      g.holds = false;
      g.violation_time = t[i];
      g.c = std::isfinite(ratio) ? std::max(g.c, ratio) : std::numeric_limits<double>::infinity();
      return g;
    }
    g.c = std::max(g.c, ratio);
  }
  return g;
}

double spectral_radius_oracle(const AugmentedSystem& sys) {
  const int n = sys.n_s;
  const unsigned full = n >= 32 ? ~0U : (1U << n) - 1U;
  const auto jm = build_jump_maps(full, n);
  const MatrixXd m = (sys.abar * (sys.h - sys.tau_d)).exp() * jm.tilde * (sys.abar * sys.tau_d).exp() * jm.acute;
  const Eigen::VectorXcd ev = m.eigenvalues();
  return ev.cwiseAbs().maxCoeff();
}

Trajectory simulate_dpetc(const AugmentedSystem& sys, const VectorXd& xi0, double horizon, int substeps) {
  const int n = sys.n_s;
  if (xi0.size() != n) throw std::invalid_argument("initial state has wrong length");
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  VectorXd x(3 * n);
  x << xi0, xi0, xi0;  // controller and buffer start informed
  const double d1 = sys.tau_d / substeps;
  const double d2 = (sys.h - sys.tau_d) / substeps;
  const MatrixXd f1 = (sys.abar * d1).exp();
  const MatrixXd f2 = (sys.abar * d2).exp();
  Trajectory tr;
  double t = 0.0;
  tr.t.push_back(t);
  tr.norm.push_back(x.norm());
  while (t < horizon) {
    unsigned subset = 0;
    for (int j = 0; j < n; ++j) {
      if (std::abs(x[n + j] - x[j]) > sys.sigma * std::abs(x[j])) subset |= 1U << j;
    }
    tr.events.push_back(static_cast<double>(std::popcount(subset)));
    const auto jm = build_jump_maps(subset, n);
    x = jm.acute * x;
    for (int i = 0; i < substeps && sys.tau_d > 0.0; ++i) {
      x = f1 * x;
      t += d1;
      tr.t.push_back(t);
      tr.norm.push_back(x.norm());
    }
    x = jm.tilde * x;
    for (int i = 0; i < substeps; ++i) {
      x = f2 * x;
      t += d2;
      tr.t.push_back(t);
      tr.norm.push_back(x.norm());
    }
  }
  return tr;
}

}  // namespace wacps::stability
