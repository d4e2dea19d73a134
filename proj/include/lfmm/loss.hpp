// SPDX-License-Identifier: Apache-2.0
//
// Smooth convex classification losses l(yhat, y), their derivatives in yhat,
// proximal maps prox_{kappa, l(., y)}(t) and the normalized displacement
// h_kappa(t, y) = (prox(t) - t) / kappa.
//
// At the square-hinge kink the second derivative is the left limit, and so is
// h'. Everything downstream (Newton Hessians, the fixed-point expectation of
// h') uses the same convention.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lfmm/common.hpp"

namespace lfmm {

enum class LossKind { square, logistic, square_hinge };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::square: return "square";
    case LossKind::logistic: return "logistic";
    case LossKind::square_hinge: return "square_hinge";
  }
  return "unknown";
}

struct ProxEvaluation {
  double prox_value = 0.0;
  double h_value = 0.0;
  double h_prime = 0.0;
};

namespace detail {

// 1 / (1 + exp(-z)) without overflow.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-z)) without overflow.
inline double log1p_exp_neg(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

}  // namespace detail

class Loss {
 public:
  constexpr explicit Loss(LossKind kind) : kind_(kind) {}

  /// Accepts "square", "logistic", "square_hinge". Non-smooth losses such as
  /// "hinge" or "absolute" are rejected.
  static Loss from_name(std::string_view name) {
    if (name == "square") return Loss(LossKind::square);
    if (name == "logistic") return Loss(LossKind::logistic);
    if (name == "square_hinge") return Loss(LossKind::square_hinge);
    if (name == "hinge" || name == "absolute")
      throw ConfigError("loss '" + std::string(name) +
                        "' is not continuously differentiable; only smooth "
                        "losses are supported");
    throw ConfigError("unknown loss '" + std::string(name) + "'");
  }

  constexpr LossKind kind() const { return kind_; }
  std::string_view name() const { return to_string(kind_); }

  constexpr bool has_closed_form_prox() const {
    return kind_ != LossKind::logistic;
  }
  constexpr bool gradient_is_linear() const {
    return kind_ == LossKind::square;
  }

  double value(double yhat, Label y) const {
    switch (kind_) {
      case LossKind::square: {
        const double d = y - yhat;
        return 0.5 * d * d;
      }
      case LossKind::logistic:
        return detail::log1p_exp_neg(y * yhat);
      case LossKind::square_hinge: {
        const double m = std::max(0.0, 1.0 - y * yhat);
        return m * m;
      }
    }
    return 0.0;
  }

  double grad(double yhat, Label y) const {
    switch (kind_) {
      case LossKind::square:
        return yhat - y;
      case LossKind::logistic:
        return -y * detail::sigmoid(-y * yhat);
      case LossKind::square_hinge:
        return -2.0 * y * std::max(0.0, 1.0 - y * yhat);
    }
    return 0.0;
  }

  /// Second derivative in yhat; left limit where it jumps.
  double hess(double yhat, Label y) const {
    switch (kind_) {
      case LossKind::square:
        return 1.0;
      case LossKind::logistic: {
        const double sp = detail::sigmoid(yhat);
        return sp * (1.0 - sp);
      }
      case LossKind::square_hinge:
        // Active region is y*yhat < 1. For y = +1 the left neighbourhood of
        // the kink is active; for y = -1 it is not.
        if (y > 0) return yhat <= 1.0 ? 2.0 : 0.0;
        return yhat > -1.0 ? 2.0 : 0.0;
    }
    return 0.0;
  }

  /// prox_{kappa, l(., y)}(t) together with h_kappa(t, y) and its left
  /// derivative in t.
  ProxEvaluation prox(double kappa, double t, Label y) const {
    if (!(kappa > 0.0)) throw std::domain_error("prox: kappa must be > 0");
    const double a = prox_point(kappa, t, y);
    const double l2 = hess(a, y);
    return {a, (a - t) / kappa, -l2 / (1.0 + kappa * l2)};
  }

  /// Only the proximal point. Callers guarantee kappa > 0.
  double prox_point(double kappa, double t, Label y) const {
    switch (kind_) {
      case LossKind::square:
        return (t + kappa * y) / (1.0 + kappa);
      case LossKind::square_hinge:
        if (y > 0) return t >= 1.0 ? t : (t + 2.0 * kappa) / (1.0 + 2.0 * kappa);
        return t <= -1.0 ? t : (t - 2.0 * kappa) / (1.0 + 2.0 * kappa);
      case LossKind::logistic:
        return logistic_prox(kappa, t, y);
    }
    return t;
  }

  /// t such that prox(t) = a, i.e. a + kappa * l'(a, y).
  double prox_inverse(double kappa, double a, Label y) const {
    return a + kappa * grad(a, y);
  }

 private:
  // Root of g(a) = a - t + kappa * l'(a, y), increasing in a. Since
  // -y l'(a, y) lies in (0, 1) the root sits in [t - kappa, t + kappa].
  // Newton from the bracket, falling back to bisection when a step leaves it.
  double logistic_prox(double kappa, double t, Label y) const {
    double lo = y > 0 ? t : t - kappa;
    double hi = y > 0 ? t + kappa : t;
    double a = t + 0.5 * kappa * y;
    for (int it = 0; it < 100; ++it) {
      const double g = a - t + kappa * grad(a, y);
      if (g > 0.0) hi = a;
      else if (g < 0.0) lo = a;
      else return a;
      const double dg = 1.0 + kappa * hess(a, y);
      double next = a - g / dg;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - a) <= 1e-15 * (1.0 + std::abs(a))) return next;
      a = next;
    }
    return a;
  }

  LossKind kind_;
};

/// Independent proximal solver: bisection on the monotone optimality
/// condition a - t + kappa l'(a, y) = 0 with an expanding bracket. Used to
/// check the closed forms and the Newton path.
inline double prox_oracle(const Loss& loss, double kappa, double t, Label y) {
  if (!(kappa > 0.0)) throw std::domain_error("prox_oracle: kappa must be > 0");
  auto g = [&](double a) { return a - t + kappa * loss.grad(a, y); };
  double step = 1.0 + kappa;
  double lo = t - step;
  double hi = t + step;
  while (g(lo) > 0.0) {
    step *= 2.0;
    lo = t - step;
  }
  while (g(hi) < 0.0) {
    step *= 2.0;
    hi = t + step;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace lfmm
