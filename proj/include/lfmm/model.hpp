// SPDX-License-Identifier: Apache-2.0
//
// Linear factor mixture model (LFMM): x = sum_k (y s_k + e_k) v_k with q
// informative factors (s_k > 0) followed by p - q pure-noise factors.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfmm/common.hpp"
#include "lfmm/random.hpp"

namespace lfmm {

/// Standardized symmetric noise laws (mean 0, variance 1).
enum class NoiseLaw { gaussian, rademacher, uniform };

inline std::string_view to_string(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::gaussian: return "gaussian";
    case NoiseLaw::rademacher: return "rademacher";
    case NoiseLaw::uniform: return "uniform";
  }
  return "unknown";
}

inline NoiseLaw parse_noise_law(std::string_view name) {
  if (name == "gaussian" || name == "normal") return NoiseLaw::gaussian;
  if (name == "rademacher") return NoiseLaw::rademacher;
  if (name == "uniform") return NoiseLaw::uniform;
  throw ConfigError("unsupported noise law '" + std::string(name) +
                    "' (expected gaussian, rademacher or uniform)");
}

/// Half-width of the unit-variance uniform law.
inline const double kUniformHalfWidth = std::sqrt(3.0);

/// E[e^4] of the standardized law.
inline double fourth_moment(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::gaussian: return 3.0;
    case NoiseLaw::rademacher: return 1.0;
    case NoiseLaw::uniform: return 9.0 / 5.0;
  }
  return 0.0;
}

/// Draws one standardized variate.
inline double draw(NoiseLaw law, Rng& rng) {
  switch (law) {
    case NoiseLaw::gaussian: {
      std::normal_distribution<double> n01;
      return n01(rng);
    }
    case NoiseLaw::rademacher: {
      return (rng() >> 63) ? 1.0 : -1.0;
    }
    case NoiseLaw::uniform: {
      std::uniform_real_distribution<double> u(-kUniformHalfWidth,
                                               kUniformHalfWidth);
      return u(rng);
    }
  }
  return 0.0;
}

/// Full generative description of an LFMM.
///
/// Column k of `V` is the direction v_k of factor z_k. The first `q`
/// columns are informative, `s` holds their signal strengths, and
/// `rho` is Pr(y = -1).
struct LfmmSpec {
  int p = 0;
  int q = 0;
  Vector s;
  Matrix V;
  std::vector<NoiseLaw> noise_laws;
  double rho = 0.5;

  auto informative_columns() const { return V.leftCols(q); }

  std::span<const NoiseLaw> informative_laws() const {
    return {noise_laws.data(), static_cast<std::size_t>(q)};
  }

  bool operator==(const LfmmSpec& other) const {
    return p == other.p && q == other.q && s == other.s && V == other.V &&
           noise_laws == other.noise_laws && rho == other.rho;
  }
};

/// Training or test sample set, one column of X per sample.
struct Dataset {
  Matrix X;
  Eigen::VectorXi y;

  int size() const { return static_cast<int>(y.size()); }
};

/// Haar-distributed p x p orthogonal matrix (Gaussian matrix, QR, with the
/// diagonal of R forced positive).
inline Matrix build_haar_orthogonal(int p, std::uint64_t seed) {
  if (p < 1) throw ConfigError("build_haar_orthogonal: p must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Matrix a(p, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) a(i, j) = n01(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (int j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// diag(scales, 1, ..., 1) * H for a Haar H.
inline Matrix build_diag_scaled_haar(int p, std::span<const double> scales,
                                     std::uint64_t seed) {
  if (static_cast<int>(scales.size()) > p)
    throw ConfigError("diag_scale has more entries than p");
  Matrix v = build_haar_orthogonal(p, seed);
  for (std::size_t i = 0; i < scales.size(); ++i)
    v.row(static_cast<Eigen::Index>(i)) *= scales[i];
  return v;
}

/// mu = sum_{k<=q} s_k v_k.
inline Vector class_mean(const LfmmSpec& spec) {
  if (spec.q == 0) return Vector::Zero(spec.p);
  return spec.informative_columns() * spec.s;
}

/// Sigma = V V^T.
inline Matrix class_covariance(const LfmmSpec& spec) {
  return spec.V * spec.V.transpose();
}

/// Same model with every noise law replaced by the standard Gaussian.
inline LfmmSpec equivalent_gmm(const LfmmSpec& spec) {
  LfmmSpec g = spec;
  std::fill(g.noise_laws.begin(), g.noise_laws.end(), NoiseLaw::gaussian);
  return g;
}

inline bool informative_factors_gaussian(const LfmmSpec& spec) {
  const auto laws = spec.informative_laws();
  return std::all_of(laws.begin(), laws.end(),
                     [](NoiseLaw l) { return l == NoiseLaw::gaussian; });
}

// ---------------------------------------------------------------------------
// Validation

enum class Severity { error, warning };

struct ValidationCheck {
  std::string name;
  bool passed = true;
  Severity severity = Severity::error;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  double mean_norm = 0.0;
  double cov_norm = 0.0;
  double cov_inv_norm = 0.0;
  /// max |v_j^T v_k| / (|v_j| |v_k|) over j <= q < k.
  double max_cross_cosine = 0.0;

  /// True when no error-level check failed. Warnings are reported but do not
  /// make the spec unusable.
  bool passed() const {
    return std::none_of(checks.begin(), checks.end(), [](const auto& c) {
      return !c.passed && c.severity == Severity::error;
    });
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.passed) out.push_back(c.name);
    return out;
  }

  const ValidationCheck* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline constexpr double kOrthogonalityTolerance = 1e-8;
inline constexpr double kRankTolerance = 1e-10;

inline ValidationReport validate_spec(const LfmmSpec& spec) {
  ValidationReport report;
  auto add = [&](std::string name, bool ok, Severity sev, std::string detail) {
    report.checks.push_back({std::move(name), ok, sev, std::move(detail)});
  };

  const bool shapes_ok = spec.p >= 1 && spec.q >= 0 && spec.q <= spec.p &&
                         spec.V.rows() == spec.p && spec.V.cols() == spec.p &&
                         spec.s.size() == spec.q &&
                         static_cast<int>(spec.noise_laws.size()) == spec.p;
  add("dimensions", shapes_ok, Severity::error,
      shapes_ok ? "" : "V must be p x p, s of length q, noise_laws of length p");
  if (!shapes_ok) return report;

  const bool finite = spec.V.allFinite() && spec.s.allFinite();
  add("finite", finite, Severity::error, finite ? "" : "non-finite entries");
  if (!finite) return report;

  const bool positive = spec.q == 0 || spec.s.minCoeff() > 0.0;
  add("signal_positive", positive, Severity::error,
      positive ? "" : "informative signal strengths must be > 0");

  const bool prior_ok = spec.rho >= 0.0 && spec.rho <= 1.0;
  add("prior", prior_ok, Severity::error,
      prior_ok ? "" : "rho must lie in [0, 1]");
  const bool prior_interior = spec.rho > 0.0 && spec.rho < 1.0;
  add("prior_interior", !prior_ok || prior_interior, Severity::warning,
      prior_interior ? "" : "degenerate class prior");

  Eigen::JacobiSVD<Matrix> svd(spec.V);
  const Vector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  const bool full_rank = smax > 0.0 && smin > kRankTolerance * smax;
  add("rank", full_rank, Severity::error,
      full_rank ? "" : "columns of V are linearly dependent");

  double worst = 0.0;
  for (int j = 0; j < spec.q; ++j) {
    const double nj = spec.V.col(j).norm();
    for (int k = spec.q; k < spec.p; ++k) {
      const double nk = spec.V.col(k).norm();
      const double denom = nj * nk;
      const double c = denom > 0.0
                           ? std::abs(spec.V.col(j).dot(spec.V.col(k))) / denom
                           : 0.0;
      worst = std::max(worst, c);
    }
  }
  report.max_cross_cosine = worst;
  // The solver evaluates v_k^T Q xi exactly through the eigenbasis of Sigma,
  // so a non-orthogonal signal subspace degrades the theory but not the
  // numerics: warning level.
  const bool orthogonal = worst <= kOrthogonalityTolerance;
  add("orthogonality", orthogonal, Severity::warning,
      orthogonal ? ""
                 : "signal subspace not orthogonal to noise subspace (max "
                   "cosine " + std::to_string(worst) + ")");

  report.mean_norm = class_mean(spec).norm();
  report.cov_norm = smax * smax;
  report.cov_inv_norm = smin > 0.0 ? 1.0 / (smin * smin)
                                   : std::numeric_limits<double>::infinity();
  return report;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws the label for Pr(y = -1) = rho.
inline Label draw_label(double rho, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < rho ? -1 : 1;
}

/// n i.i.d. samples x_i = y_i mu + V e_i, e_i drawn per noise law.
inline Dataset sample_dataset(const LfmmSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_dataset: n must be >= 1");
  Rng rng(seed);
  Dataset data;
  data.y.resize(n);
  Matrix noise(spec.p, n);
  for (int i = 0; i < n; ++i) {
    data.y(i) = draw_label(spec.rho, rng);
    for (int k = 0; k < spec.p; ++k)
      noise(k, i) = draw(spec.noise_laws[static_cast<std::size_t>(k)], rng);
  }
  data.X.noalias() = spec.V * noise;
  const Vector mu = class_mean(spec);
  data.X.noalias() += mu * data.y.cast<double>().transpose();
  return data;
}

}  // namespace lfmm
