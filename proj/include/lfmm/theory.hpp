// SPDX-License-Identifier: Apache-2.0
//
// Asymptotic predictions from solved order parameters. The limiting test
// score is r = y m + sigma e~ + sum_k psi_k e_k, the limiting training score
// is prox_{kappa, l(., y)}(r).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfmm/common.hpp"
#include "lfmm/fixed_point.hpp"
#include "lfmm/loss.hpp"
#include "lfmm/model.hpp"
#include "lfmm/quadrature.hpp"
#include "lfmm/spectral.hpp"

namespace lfmm {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Law of the limiting score r.
struct ScoreLaw {
  double m = 0.0;
  double sigma = 0.0;
  Vector psi;
  std::vector<NoiseLaw> laws;  // informative factors only
  double rho = 0.5;

  static ScoreLaw from(const DerivedScalars& d, const LfmmSpec& spec) {
    ScoreLaw law;
    law.m = d.m;
    law.sigma = std::sqrt(std::max(d.sigma2, 0.0));
    law.psi = d.psi;
    law.laws.assign(spec.informative_laws().begin(), spec.informative_laws().end());
    law.rho = spec.rho;
    return law;
  }

  bool gaussian() const {
    return std::all_of(laws.begin(), laws.end(),
                       [](NoiseLaw l) { return l == NoiseLaw::gaussian; });
  }
};

/// r as a finite mixture of N(center, sd^2) (*) U[-half_width, half_width]
/// kernels. Gaussian factors fold into sd; Rademacher factors are enumerated
/// exactly; one uniform factor is handled analytically by the kernel and any
/// further uniform factors by Gauss-Legendre nodes.
class ScoreMixture {
 public:
  struct Component {
    Label y;
    double weight;  // includes the class weight
    double center;
    double sd;
    double half_width;
  };

  explicit ScoreMixture(const ScoreLaw& law, int points = 48) {
    double var = law.sigma * law.sigma;
    int analytic_uniform = -1;
    for (std::size_t k = 0; k < law.laws.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (law.laws[k] == NoiseLaw::gaussian) var += law.psi(kk) * law.psi(kk);
      if (law.laws[k] == NoiseLaw::uniform) analytic_uniform = static_cast<int>(k);
    }
    const double sd = std::sqrt(var);
    const double hw = analytic_uniform >= 0
                          ? std::abs(law.psi(analytic_uniform)) * kUniformHalfWidth
                          : 0.0;

    // Enumerate the remaining non-Gaussian factors.
    std::vector<std::pair<double, double>> offsets{{1.0, 0.0}};  // (weight, shift)
    for (std::size_t k = 0; k < law.laws.size(); ++k) {
      if (law.laws[k] == NoiseLaw::gaussian || static_cast<int>(k) == analytic_uniform)
        continue;
      const QuadratureRule rule = noise_rule(law.laws[k], points);
      const double psi = law.psi(static_cast<Eigen::Index>(k));
      std::vector<std::pair<double, double>> next;
      next.reserve(offsets.size() * rule.size());
      for (const auto& [w, shift] : offsets)
        for (std::size_t j = 0; j < rule.size(); ++j)
          next.emplace_back(w * rule.weights[j], shift + psi * rule.nodes[j]);
      offsets = std::move(next);
    }
    for (Label y : {-1, 1}) {
      const double wy = y < 0 ? law.rho : 1.0 - law.rho;
      class_weight_[y > 0] = wy;
      if (wy == 0.0) continue;
      for (const auto& [w, shift] : offsets)
        components_.push_back({y, wy * w, y * law.m + shift, sd, hw});
    }
  }

  const std::vector<Component>& components() const { return components_; }
  double class_weight(Label y) const { return class_weight_[y > 0]; }

  static double kernel_pdf(const Component& c, double x) {
    if (c.half_width > 0.0) {
      const double a = c.center - c.half_width, b = c.center + c.half_width;
      if (c.sd <= 0.0) return (x >= a && x <= b) ? 1.0 / (b - a) : 0.0;
      return (normal_cdf((x - a) / c.sd) - normal_cdf((x - b) / c.sd)) / (b - a);
    }
    if (c.sd <= 0.0) return x == c.center ? std::numeric_limits<double>::infinity() : 0.0;
    return normal_pdf((x - c.center) / c.sd) / c.sd;
  }

  /// Kernel CDF; `left` gives Pr(X < x) instead of Pr(X <= x).
  static double kernel_cdf(const Component& c, double x, bool left = false) {
    if (c.half_width > 0.0) {
      const double a = c.center - c.half_width, b = c.center + c.half_width;
      if (c.sd <= 0.0) return std::clamp((x - a) / (b - a), 0.0, 1.0);
      auto g = [](double z) { return z * normal_cdf(z) + normal_pdf(z); };
      const double v = c.sd / (b - a) * (g((x - a) / c.sd) - g((x - b) / c.sd));
      return std::clamp(v, 0.0, 1.0);
    }
    if (c.sd <= 0.0) return left ? (x > c.center ? 1.0 : 0.0) : (x >= c.center ? 1.0 : 0.0);
    return normal_cdf((x - c.center) / c.sd);
  }

  double pdf(double x) const {
    double acc = 0.0;
    for (const auto& c : components_) acc += c.weight * kernel_pdf(c, x);
    return acc;
  }

  double cdf(double x) const {
    double acc = 0.0;
    for (const auto& c : components_) acc += c.weight * kernel_cdf(c, x);
    return acc;
  }

  /// Pr(r <= x, y) (or Pr(r < x, y) with `left`), not normalized by Pr(y).
  double joint_cdf(Label y, double x, bool left = false) const {
    double acc = 0.0;
    for (const auto& c : components_)
      if (c.y == y) acc += c.weight * kernel_cdf(c, x, left);
    return acc;
  }

  /// Density of r restricted to class y (not normalized by Pr(y)).
  double joint_pdf(Label y, double x) const {
    double acc = 0.0;
    for (const auto& c : components_)
      if (c.y == y) acc += c.weight * kernel_pdf(c, x);
    return acc;
  }

  /// Mean, variance, skewness and kurtosis (not excess) of r, or of r given
  /// the label when `label` is set.
  std::array<double, 4> moments(std::optional<Label> label = std::nullopt) const {
    double r0 = 0, r1 = 0, r2 = 0, r3 = 0, r4 = 0;
    for (const auto& c : components_) {
      if (label && c.y != *label) continue;
      const double h2 = c.half_width * c.half_width;
      const double s2 = c.sd * c.sd;
      const double m2 = s2 + h2 / 3.0;
      const double m4 = 3.0 * s2 * s2 + 2.0 * s2 * h2 + h2 * h2 / 5.0;
      const double x = c.center;
      r0 += c.weight;
      r1 += c.weight * x;
      r2 += c.weight * (x * x + m2);
      r3 += c.weight * (x * x * x + 3.0 * x * m2);
      r4 += c.weight * (x * x * x * x + 6.0 * x * x * m2 + m4);
    }
    if (!(r0 > 0.0)) throw std::domain_error("moments: empty class");
    r1 /= r0;
    r2 /= r0;
    r3 /= r0;
    r4 /= r0;
    const double var = r2 - r1 * r1;
    const double c3 = r3 - 3 * r1 * r2 + 2 * r1 * r1 * r1;
    const double c4 = r4 - 4 * r1 * r3 + 6 * r1 * r1 * r2 - 3 * r1 * r1 * r1 * r1;
    return {r1, var, c3 / std::pow(var, 1.5), c4 / (var * var)};
  }

 private:
  std::vector<Component> components_;
  double class_weight_[2] = {0.0, 0.0};
};

/// Pr(y r > 0). Ties count as errors.
inline double generalization_accuracy(const ScoreLaw& law, int points = 48) {
  const ScoreMixture mix(law, points);
  return (mix.class_weight(1) - mix.joint_cdf(1, 0.0)) +
         mix.joint_cdf(-1, 0.0, /*left=*/true);
}

/// Pr(y prox_{kappa, l(., y)}(r) > 0).
///
/// prox is strictly increasing with prox(t) = 0 exactly at t = kappa l'(0, y),
/// so the event is a half-line in r and the CDF of the mixture is exact.
inline double training_accuracy(const ScoreLaw& law, const Loss& loss,
                                double kappa, int points = 48) {
  if (!(kappa > 0.0)) throw std::domain_error("training_accuracy: kappa must be > 0");
  const ScoreMixture mix(law, points);
  const double t_pos = loss.prox_inverse(kappa, 0.0, 1);
  const double t_neg = loss.prox_inverse(kappa, 0.0, -1);
  return (mix.class_weight(1) - mix.joint_cdf(1, t_pos)) +
         mix.joint_cdf(-1, t_neg, /*left=*/true);
}

/// Prox parameters for training-score densities.
struct TrainingScores {
  Loss loss;
  double kappa;
};

/// Density of the test score r on `x_grid`, or of the training score
/// prox(r) when `training` is set (change of variables through prox).
inline std::vector<double> score_density(const ScoreLaw& law,
                                         std::optional<TrainingScores> training,
                                         std::span<const double> x_grid,
                                         int points = 48) {
  const ScoreMixture mix(law, points);
  std::vector<double> out;
  out.reserve(x_grid.size());
  for (double x : x_grid) {
    if (!training) {
      out.push_back(mix.pdf(x));
      continue;
    }
    double acc = 0.0;
    for (Label y : {-1, 1}) {
      const double t = training->loss.prox_inverse(training->kappa, x, y);
      acc += mix.joint_pdf(y, t) * (1.0 + training->kappa * training->loss.hess(x, y));
    }
    out.push_back(acc);
  }
  return out;
}

/// CDF counterpart of score_density.
inline double score_cdf(const ScoreMixture& mix,
                        const std::optional<TrainingScores>& training, double x) {
  if (!training) return mix.cdf(x);
  double acc = 0.0;
  for (Label y : {-1, 1})
    acc += mix.joint_cdf(y, training->loss.prox_inverse(training->kappa, x, y));
  return acc;
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and a
/// continuous CDF. Sorts `samples` in place.
inline double ks_distance(std::vector<double>& samples,
                          const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Universality audit

struct UniversalityThresholds {
  double parameter = 1e-6;
};

struct UniversalityVerdict {
  bool in_distribution_universal = false;
  bool classifier_universal = false;
  std::map<std::string, double> parameter_deltas;
  double max_parameter_delta = 0.0;
  double accuracy_lfmm = 0.0;
  double accuracy_gmm = 0.0;
  double accuracy_delta = 0.0;
  FixedPoint lfmm;
  FixedPoint gmm;
};

/// Solves the fixed point for `spec` and for its equivalent GMM and compares.
/// Throws NumericalError if either solve fails to converge.
inline UniversalityVerdict universality_audit(const LfmmSpec& spec,
                                              const Loss& loss,
                                              const SpectralCache& cache,
                                              int gh_points,
                                              const SolverSettings& settings = {},
                                              UniversalityThresholds thresholds = {}) {
  const LfmmSpec gmm = equivalent_gmm(spec);
  UniversalityVerdict v;
  const OrderParameters init = OrderParameters::initial(spec.q);
  v.lfmm = solve(cache, build_grid(spec, gh_points), loss, init, settings);
  v.gmm = solve(cache, build_grid(gmm, gh_points), loss, init, settings);
  if (!v.lfmm.diagnostics.converged || !v.gmm.diagnostics.converged)
    throw NumericalError("universality_audit: fixed-point solve did not converge");

  const auto& a = v.lfmm.params;
  const auto& b = v.gmm.params;
  v.parameter_deltas["theta"] = std::abs(a.theta - b.theta);
  v.parameter_deltas["eta"] = std::abs(a.eta - b.eta);
  v.parameter_deltas["gamma"] = std::abs(a.gamma - b.gamma);
  for (int k = 0; k < spec.q; ++k)
    v.parameter_deltas["omega_" + std::to_string(k + 1)] =
        std::abs(a.omega(k) - b.omega(k));
  for (const auto& [name, d] : v.parameter_deltas)
    v.max_parameter_delta = std::max(v.max_parameter_delta, d);

  v.classifier_universal = v.max_parameter_delta < thresholds.parameter;
  v.in_distribution_universal =
      v.classifier_universal && informative_factors_gaussian(spec);
  v.accuracy_lfmm =
      generalization_accuracy(ScoreLaw::from(v.lfmm.derived, spec), gh_points);
  v.accuracy_gmm =
      generalization_accuracy(ScoreLaw::from(v.gmm.derived, gmm), gh_points);
  v.accuracy_delta = std::abs(v.accuracy_lfmm - v.accuracy_gmm);
  return v;
}

}  // namespace lfmm
