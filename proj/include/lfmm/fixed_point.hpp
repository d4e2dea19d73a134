// SPDX-License-Identifier: Apache-2.0
//
// Self-consistent order parameters (theta, eta, gamma, omega_1..omega_q):
//
//   theta   = -E[h'(r, y)]          eta = E[y h(r, y)]
//   gamma   = sqrt(E[h(r, y)^2])    omega_k = E[h(r, y) e_k] + theta psi_k
//
// where h = h_kappa and r = y m + sigma e~ + sum_k psi_k e_k, with kappa, m,
// sigma^2 and psi supplied by the spectral engine.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "lfmm/common.hpp"
#include "lfmm/loss.hpp"
#include "lfmm/quadrature.hpp"
#include "lfmm/random.hpp"
#include "lfmm/spectral.hpp"

namespace lfmm {

struct OrderParameters {
  double theta = 0.5;
  double eta = 0.0;
  double gamma = 1.0;
  Vector omega;

  static OrderParameters initial(int q) {
    return {0.5, 0.0, 1.0, Vector::Zero(q)};
  }

  /// max |a - b| over all components.
  static double distance(const OrderParameters& a, const OrderParameters& b) {
    double d = std::max({std::abs(a.theta - b.theta), std::abs(a.eta - b.eta),
                         std::abs(a.gamma - b.gamma)});
    if (a.omega.size() > 0)
      d = std::max(d, (a.omega - b.omega).cwiseAbs().maxCoeff());
    return d;
  }
};

struct DerivedScalars {
  double kappa = 0.0;
  double m = 0.0;
  double sigma2 = 0.0;
  Vector psi;
};

struct Expectations {
  double h_prime = 0.0;  // E[h'(r, y)]
  double yh = 0.0;       // E[y h(r, y)]
  double h2 = 0.0;       // E[h(r, y)^2]
  Vector he;             // E[h(r, y) e_k]
};

struct SolverSettings {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 2000;
  bool record_trajectory = false;
};

struct SolveDiagnostics {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  int theta_clamps = 0;
  std::vector<OrderParameters> trajectory;
};

struct FixedPoint {
  OrderParameters params;
  DerivedScalars derived;
  SolveDiagnostics diagnostics;
};

inline DerivedScalars derive(const OrderParameters& params,
                             const SpectralCache& cache) {
  DerivedScalars d;
  d.kappa = cache.kappa_of_theta(params.theta);
  const SignalResponse sr =
      cache.signal_response(params.theta, params.eta, params.omega);
  d.m = sr.m;
  d.psi = sr.psi;
  d.sigma2 = cache.sigma2_of(params.theta, params.gamma);
  return d;
}

namespace detail {

// For the square hinge, h(t, y) = A y (1 - y t) on y t < 1 and 0 otherwise,
// A = 2 / (1 + 2 kappa). With t = c + sigma z and z standard normal the
// moments over z are truncated-normal integrals; quadrature would resolve
// the jump of h' only slowly.
inline void square_hinge_moments(double kappa, double c, double sigma, Label y,
                                 double& mean, double& mean_prime, double& second) {
  const double a_coef = 2.0 / (1.0 + 2.0 * kappa);
  const double b = 1.0 - y * c;  // 1 - y t at z = 0
  double cdf, pdf;
  if (sigma > 0.0) {
    const double a = b / sigma;
    cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
    pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  } else {
    // left derivative in t at the kink, as in Loss::prox
    cdf = (b > 0.0 || (b == 0.0 && y > 0)) ? 1.0 : 0.0;
    pdf = 0.0;
  }
  mean = a_coef * y * (b * cdf + sigma * pdf);
  mean_prime = -a_coef * cdf;
  second = a_coef * a_coef * ((b * b + sigma * sigma) * cdf + b * sigma * pdf);
}

}  // namespace detail

/// Quadrature of the four expectation functionals.
inline Expectations expectations(const ExpectationGrid& grid, const Loss& loss,
                                 double kappa, double m, double sigma2,
                                 const Vector& psi) {
  if (!(kappa > 0.0)) throw std::domain_error("expectations: kappa must be > 0");
  if (sigma2 < 0.0) throw std::domain_error("expectations: sigma2 must be >= 0");
  const int q = grid.q();
  const auto& columns = grid.enumerated;
  double var = sigma2;
  for (int k : grid.folded) var += psi(k) * psi(k);
  const double sigma = std::sqrt(var);
  Expectations e;
  e.he = Vector::Zero(q);
  const auto& tn = grid.tilde.nodes;
  const auto& tw = grid.tilde.weights;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const double wc = grid.cell_weight[c];
    if (wc == 0.0) continue;
    const Label y = grid.cell_label[c];
    const auto row = static_cast<Eigen::Index>(c);
    double center = y * m;
    for (std::size_t j = 0; j < columns.size(); ++j)
      center += psi(columns[j]) * grid.cell_noise(row, static_cast<Eigen::Index>(j));
    double sh = 0.0, shp = 0.0, sh2 = 0.0;
    if (loss.kind() == LossKind::square_hinge) {
      detail::square_hinge_moments(kappa, center, sigma, y, sh, shp, sh2);
    } else {
      for (std::size_t j = 0; j < tn.size(); ++j) {
        const ProxEvaluation pe = loss.prox(kappa, center + sigma * tn[j], y);
        sh += tw[j] * pe.h_value;
        shp += tw[j] * pe.h_prime;
        sh2 += tw[j] * pe.h_value * pe.h_value;
      }
    }
    e.h_prime += wc * shp;
    e.yh += wc * y * sh;
    e.h2 += wc * sh2;
    for (std::size_t j = 0; j < columns.size(); ++j)
      e.he(columns[j]) += wc * sh * grid.cell_noise(row, static_cast<Eigen::Index>(j));
  }
  for (int k : grid.folded) e.he(k) = psi(k) * e.h_prime;
  return e;
}

struct StepResult {
  OrderParameters next;
  DerivedScalars derived;  // evaluated at the input parameters
  bool theta_clamped = false;
};

/// One application of the fixed-point map.
inline StepResult step(const OrderParameters& params, const SpectralCache& cache,
                       const ExpectationGrid& grid, const Loss& loss) {
  StepResult out;
  out.derived = derive(params, cache);
  const DerivedScalars& d = out.derived;
  const Expectations e = expectations(grid, loss, d.kappa, d.m, d.sigma2, d.psi);
  double theta = -e.h_prime;
  if (theta < 0.0) {
    theta = 0.0;
    out.theta_clamped = true;
  }
  out.next.theta = theta;
  out.next.eta = e.yh;
  out.next.gamma = std::sqrt(std::max(e.h2, 0.0));
  // omega uses the freshly updated theta with psi from the current iterate.
  out.next.omega = e.he + theta * d.psi;
  return out;
}

namespace detail {
inline bool finite(const OrderParameters& p) {
  return std::isfinite(p.theta) && std::isfinite(p.eta) &&
         std::isfinite(p.gamma) && p.omega.allFinite();
}
}  // namespace detail

/// Damped Picard iteration params <- (1 - d) params + d step(params).
/// Converged when the undamped fixed-point residual max|step(p) - p| <= tol.
/// Non-convergence is reported through the diagnostics, not thrown.
inline FixedPoint solve(const SpectralCache& cache, const ExpectationGrid& grid,
                        const Loss& loss, OrderParameters init,
                        const SolverSettings& settings = {}) {
  if (!(settings.tol > 0.0)) throw ConfigError("solve: tol must be > 0");
  if (!(settings.damping > 0.0 && settings.damping <= 1.0))
    throw ConfigError("solve: damping must lie in (0, 1]");
  if (init.omega.size() != cache.q()) init.omega = Vector::Zero(cache.q());
  if (grid.q() != cache.q())
    throw ConfigError("solve: grid and spectral cache disagree on q");

  FixedPoint fp;
  SolveDiagnostics& diag = fp.diagnostics;
  OrderParameters current = std::move(init);
  const double d = settings.damping;
  for (int it = 1; it <= settings.max_iter; ++it) {
    StepResult sr = step(current, cache, grid, loss);
    if (sr.theta_clamped) ++diag.theta_clamps;
    diag.iterations = it;
    if (!detail::finite(sr.next)) {
      diag.final_residual = std::numeric_limits<double>::infinity();
      diag.converged = false;
      fp.params = current;
      fp.derived = sr.derived;
      return fp;
    }
    const double residual = OrderParameters::distance(sr.next, current);
    diag.final_residual = residual;
    if (settings.record_trajectory) diag.trajectory.push_back(current);
    if (residual <= settings.tol) {
      diag.converged = true;
      fp.params = std::move(sr.next);
      fp.derived = derive(fp.params, cache);
      return fp;
    }
    current.theta = std::max(0.0, (1.0 - d) * current.theta + d * sr.next.theta);
    current.eta = (1.0 - d) * current.eta + d * sr.next.eta;
    current.gamma = (1.0 - d) * current.gamma + d * sr.next.gamma;
    current.omega = (1.0 - d) * current.omega + d * sr.next.omega;
  }
  fp.params = current;
  fp.derived = derive(fp.params, cache);
  return fp;
}

struct RestartReport {
  FixedPoint best;
  /// Largest parameter distance between converged restarts.
  double spread = 0.0;
  bool multiple_solutions = false;
  int converged_runs = 0;
};

inline constexpr double kMultiSolutionThreshold = 1e-6;

/// Solves from the default start plus `restarts` random starts and flags
/// disagreement between converged solutions.
inline RestartReport solve_with_restarts(const SpectralCache& cache,
                                         const ExpectationGrid& grid,
                                         const Loss& loss, int restarts,
                                         std::uint64_t seed,
                                         const SolverSettings& settings = {}) {
  RestartReport report;
  report.best = solve(cache, grid, loss, OrderParameters::initial(cache.q()),
                      settings);
  std::vector<OrderParameters> converged;
  if (report.best.diagnostics.converged) converged.push_back(report.best.params);
  Rng rng(derive_seed(seed, stream::kRestart));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int r = 0; r < restarts; ++r) {
    OrderParameters init = OrderParameters::initial(cache.q());
    init.theta = 0.05 + 1.5 * u(rng);
    init.eta = 2.0 * u(rng) - 1.0;
    init.gamma = 0.05 + 2.0 * u(rng);
    for (int k = 0; k < cache.q(); ++k) init.omega(k) = 0.5 * (2.0 * u(rng) - 1.0);
    FixedPoint fp = solve(cache, grid, loss, init, settings);
    if (!fp.diagnostics.converged) continue;
    converged.push_back(fp.params);
    if (!report.best.diagnostics.converged) report.best = std::move(fp);
  }
  report.converged_runs = static_cast<int>(converged.size());
  for (std::size_t i = 0; i < converged.size(); ++i)
    for (std::size_t j = i + 1; j < converged.size(); ++j)
      report.spread = std::max(
          report.spread, OrderParameters::distance(converged[i], converged[j]));
  report.multiple_solutions = report.spread > kMultiSolutionThreshold;
  return report;
}

/// Square-loss fixed point by scalar reduction.
///
/// With l = (y - yhat)^2 / 2, h(r, y) = (y - r) / (1 + kappa) is linear, so
/// theta = 1 / (1 + kappa(theta)) is a scalar equation, omega = 0, and
/// (eta, gamma) follow in closed form from the q x q resolvent block. Only
/// the mean and variance of the noise laws enter, so no grid is needed.
inline FixedPoint closed_form_square_loss(const SpectralCache& cache) {
  // f(theta) = theta (1 + kappa(theta)) - 1 is increasing with f(0) = -1 and
  // f(1) > 0, so bisection on [0, 1] brackets the unique root.
  double lo = 0.0, hi = 1.0;
  int iterations = 0;
  while (hi - lo > 1e-16 && iterations < 200) {
    const double mid = 0.5 * (lo + hi);
    if (mid * (1.0 + cache.kappa_of_theta(mid)) - 1.0 > 0.0) hi = mid;
    else lo = mid;
    ++iterations;
  }
  const double theta = 0.5 * (lo + hi);
  const double kappa = cache.kappa_of_theta(theta);
  const Matrix resolvent = cache.informative_resolvent(theta);
  const Vector& s = cache.signal();

  // m = eta a with a = s^T M s, and eta (1 + kappa) = 1 - m.
  const double a = s.size() > 0 ? s.dot(resolvent * s) : 0.0;
  const double eta = 1.0 / (1.0 + kappa + a);
  const double m = eta * a;
  const Vector psi = s.size() > 0 ? Vector(eta * (resolvent * s))
                                  : Vector(Vector::Zero(0));
  // gamma^2 (1 + kappa)^2 = E[(y - r)^2] = 1 - 2m + m^2 + |psi|^2 + tau gamma^2
  const double tau = cache.sigma2_of(theta, 1.0);
  const double one_k = 1.0 + kappa;
  const double gamma2 =
      (1.0 - 2.0 * m + m * m + psi.squaredNorm()) / (one_k * one_k - tau);
  if (!(gamma2 >= 0.0))
    throw NumericalError("closed_form_square_loss: negative gamma^2");

  FixedPoint fp;
  fp.params.theta = theta;
  fp.params.eta = eta;
  fp.params.gamma = std::sqrt(gamma2);
  fp.params.omega = Vector::Zero(cache.q());
  fp.derived = derive(fp.params, cache);
  fp.diagnostics.iterations = iterations;
  fp.diagnostics.converged = true;
  fp.diagnostics.final_residual = hi - lo;
  return fp;
}

}  // namespace lfmm
