// SPDX-License-Identifier: Apache-2.0
//
// Ridge-regularized empirical risk minimization
//
//   beta = argmin (1/n) sum_i l(x_i^T beta, y_i) + (lambda / 2) |beta|^2
//
// and the sampled high-dimensional equivalent classifier
//
//   beta~ = Q (eta mu + sum_k omega_k v_k + gamma Sigma^{1/2} u),
//   u ~ N(0, I_p / n).
#pragma once

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>

#include "lfmm/common.hpp"
#include "lfmm/fixed_point.hpp"
#include "lfmm/loss.hpp"
#include "lfmm/model.hpp"
#include "lfmm/random.hpp"
#include "lfmm/spectral.hpp"

namespace lfmm {

struct TrainedClassifier {
  Vector beta;
  double objective_value = 0.0;
  double grad_norm = 0.0;
  int newton_iterations = 0;
};

struct TrainSettings {
  double tol = 1e-10;
  int max_iter = 100;
};

inline double erm_objective(const Dataset& data, const Loss& loss,
                            double lambda, const Vector& beta) {
  const Vector scores = data.X.transpose() * beta;
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) acc += loss.value(scores(i), data.y(i));
  return acc / data.size() + 0.5 * lambda * beta.squaredNorm();
}

inline Vector erm_gradient(const Dataset& data, const Loss& loss, double lambda,
                           const Vector& beta) {
  const Vector scores = data.X.transpose() * beta;
  Vector g(data.size());
  for (int i = 0; i < data.size(); ++i) g(i) = loss.grad(scores(i), data.y(i));
  return data.X * g / data.size() + lambda * beta;
}

/// Solves the ridge ERM problem. Square loss is a single linear solve; other
/// losses use Newton with Armijo backtracking. The Hessian
/// (1/n) X D X^T + lambda I is positive definite for lambda > 0 even where
/// l'' vanishes.
inline TrainedClassifier train(const Dataset& data, const Loss& loss,
                               double lambda, const TrainSettings& settings = {}) {
  if (!(lambda > 0.0)) throw ConfigError("train: lambda must be > 0");
  const int p = static_cast<int>(data.X.rows());
  const int n = data.size();
  const Matrix identity = Matrix::Identity(p, p);
  TrainedClassifier clf;

  if (loss.kind() == LossKind::square) {
    Matrix h = lambda * identity;
    h.selfadjointView<Eigen::Lower>().rankUpdate(data.X, 1.0 / n);
    const Vector rhs = data.X * data.y.cast<double>() / n;
    clf.beta = h.selfadjointView<Eigen::Lower>().llt().solve(rhs);
    clf.newton_iterations = 1;
  } else {
    clf.beta = Vector::Zero(p);
    double f = erm_objective(data, loss, lambda, clf.beta);
    for (int it = 0; it < settings.max_iter; ++it) {
      const Vector scores = data.X.transpose() * clf.beta;
      Vector g(n), dd(n);
      for (int i = 0; i < n; ++i) {
        g(i) = loss.grad(scores(i), data.y(i));
        dd(i) = loss.hess(scores(i), data.y(i));
      }
      const Vector grad = data.X * g / n + lambda * clf.beta;
      if (grad.norm() <= settings.tol) break;
      Matrix h = lambda * identity;
      const Matrix weighted = data.X * dd.cwiseSqrt().asDiagonal();
      h.selfadjointView<Eigen::Lower>().rankUpdate(weighted, 1.0 / n);
      const Vector direction = -h.selfadjointView<Eigen::Lower>().llt().solve(grad);
      const double slope = grad.dot(direction);
      double t = 1.0;
      double f_new = erm_objective(data, loss, lambda, clf.beta + direction);
      // Once the predicted decrease is below the rounding error of f the
      // Armijo test is noise; take the full Newton step.
      const bool at_roundoff = -slope <= 1e-13 * (1.0 + std::abs(f));
      while (!at_roundoff && f_new > f + 1e-4 * t * slope && t > 1e-12) {
        t *= 0.5;
        f_new = erm_objective(data, loss, lambda, clf.beta + t * direction);
      }
      clf.beta += t * direction;
      f = f_new;
      clf.newton_iterations = it + 1;
    }
  }
  clf.objective_value = erm_objective(data, loss, lambda, clf.beta);
  clf.grad_norm = erm_gradient(data, loss, lambda, clf.beta).norm();
  if (loss.kind() != LossKind::square && !(clf.grad_norm <= settings.tol)) {
    std::ostringstream msg;
    msg << std::scientific << std::setprecision(2)
        << "train: Newton did not reach gradient norm " << settings.tol << " after "
        << clf.newton_iterations << " iterations (final " << clf.grad_norm << ")";
    throw NumericalError(msg.str());
  }
  return clf;
}

/// |lambda beta + (1/n) sum_i l'(beta^T x_i, y_i) x_i| / max(1, |lambda beta|).
inline double stationarity_residual(const Vector& beta, const Dataset& data,
                                    const Loss& loss, double lambda) {
  const Vector g = erm_gradient(data, loss, lambda, beta);
  return g.norm() / std::max(1.0, lambda * beta.norm());
}

inline double stationarity_residual(const TrainedClassifier& clf,
                                    const Dataset& data, const Loss& loss,
                                    double lambda) {
  return stationarity_residual(clf.beta, data, loss, lambda);
}

/// E[beta~] = Q (eta mu + V_info omega).
inline Vector equivalent_classifier_mean(const OrderParameters& params,
                                         const SpectralCache& cache) {
  Vector xi = params.eta * cache.mean();
  if (cache.q() > 0) xi += cache.informative_columns() * params.omega;
  return cache.apply_resolvent(params.theta, xi);
}

/// One draw of beta~.
inline Vector sample_equivalent_classifier(const OrderParameters& params,
                                           const SpectralCache& cache,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cache.n()));
  Vector u(cache.p());
  for (int i = 0; i < cache.p(); ++i) u(i) = scale * n01(rng);
  Vector xi = params.eta * cache.mean() + params.gamma * cache.apply_sqrt_sigma(u);
  if (cache.q() > 0) xi += cache.informative_columns() * params.omega;
  return cache.apply_resolvent(params.theta, xi);
}

}  // namespace lfmm
