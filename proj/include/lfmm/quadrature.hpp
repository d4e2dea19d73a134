// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "lfmm/common.hpp"
#include "lfmm/model.hpp"

namespace lfmm {

/// One-dimensional rule for a probability measure: sum(weights) == 1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  double moment(int order) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      acc += weights[i] * std::pow(nodes[i], order);
    return acc;
  }
};

namespace detail {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix,
// weights the squared first components of its normalized eigenvectors.
inline QuadratureRule golub_welsch(const Vector& off_diagonal, int n) {
  Matrix jacobi = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = off_diagonal(i);
    jacobi(i + 1, i) = off_diagonal(i);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  if (eig.info() != Eigen::Success)
    throw NumericalError("golub_welsch: eigensolver failed");
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    rule.nodes[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
    rule.weights[static_cast<std::size_t>(i)] = v0 * v0;
    total += v0 * v0;
  }
  for (auto& w : rule.weights) w /= total;
  // Symmetrize: both measures are symmetric about zero.
  for (int i = 0; i < n / 2; ++i) {
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(n - 1 - i);
    const double x = 0.5 * (rule.nodes[b] - rule.nodes[a]);
    const double w = 0.5 * (rule.weights[a] + rule.weights[b]);
    rule.nodes[a] = -x;
    rule.nodes[b] = x;
    rule.weights[a] = rule.weights[b] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal law (probabilists' weight).
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw ConfigError("gauss_hermite: n must be >= 1");
  Vector off(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  return detail::golub_welsch(off, n);
}

/// Gauss-Legendre rule for the uniform law on [-half_width, half_width].
inline QuadratureRule gauss_legendre(int n, double half_width = 1.0) {
  if (n < 1) throw ConfigError("gauss_legendre: n must be >= 1");
  Vector off(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    off(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  QuadratureRule rule = detail::golub_welsch(off, n);
  for (auto& x : rule.nodes) x *= half_width;
  return rule;
}

/// Rule reproducing the standardized noise law. Rademacher is exact with two
/// points; the others use `points` nodes.
inline QuadratureRule noise_rule(NoiseLaw law, int points) {
  switch (law) {
    case NoiseLaw::gaussian: return gauss_hermite(points);
    case NoiseLaw::rademacher: return {{-1.0, 1.0}, {0.5, 0.5}};
    case NoiseLaw::uniform: return gauss_legendre(points, kUniformHalfWidth);
  }
  throw ConfigError("noise_rule: unsupported law");
}

/// Tensor-product quadrature over (y, e_1..e_q, e~) realizing expectations of
/// functions of r = y m + sigma e~ + sum_k psi_k e_k.
///
/// Stored factorized: `cells` enumerate y and the enumerated factors with
/// their joint weight, `tilde` is the Gauss-Hermite rule for e~. Gaussian
/// factors may be folded into e~ instead of enumerated: their sum with
/// sigma e~ is again Gaussian, and E[h e_k] = psi_k E[h'] by Stein's lemma.
struct ExpectationGrid {
  struct FactorRule {
    NoiseLaw law;
    QuadratureRule rule;
  };

  std::vector<FactorRule> factors;  // one per informative factor
  std::vector<int> enumerated;      // factor indices spanned by the cells
  std::vector<int> folded;          // Gaussian factors merged into e~
  QuadratureRule tilde;
  double rho = 0.5;

  // Cells over y and the enumerated factors; column j of `cell_noise` holds
  // factor enumerated[j].
  std::vector<Label> cell_label;
  std::vector<double> cell_weight;
  Matrix cell_noise;

  int q() const { return static_cast<int>(factors.size()); }
  std::size_t cell_count() const { return cell_weight.size(); }
  std::size_t size() const { return cell_count() * tilde.size(); }

  double total_weight() const {
    double cells = 0.0;
    for (double w : cell_weight) cells += w;
    double inner = 0.0;
    for (double w : tilde.weights) inner += w;
    return cells * inner;
  }
};

inline constexpr int kMinGridPoints = 8;

/// Builds the grid for the informative factors of `spec`. Noise factors
/// (k > q) never enter.
inline ExpectationGrid build_grid(const LfmmSpec& spec, int gh_points,
                                  bool fold_gaussian = true) {
  if (gh_points < kMinGridPoints)
    throw ConfigError("build_grid: gh_points must be >= " +
                      std::to_string(kMinGridPoints));
  ExpectationGrid grid;
  grid.rho = spec.rho;
  grid.tilde = gauss_hermite(gh_points);
  for (NoiseLaw law : spec.informative_laws()) {
    const int k = grid.q();
    grid.factors.push_back({law, noise_rule(law, gh_points)});
    if (fold_gaussian && law == NoiseLaw::gaussian) grid.folded.push_back(k);
    else grid.enumerated.push_back(k);
  }

  std::size_t per_label = 1;
  for (int k : grid.enumerated)
    per_label *= grid.factors[static_cast<std::size_t>(k)].rule.size();
  const std::size_t cells = 2 * per_label;
  const int q = static_cast<int>(grid.enumerated.size());
  auto factor = [&](int j) -> const QuadratureRule& {
    return grid.factors[static_cast<std::size_t>(
                            grid.enumerated[static_cast<std::size_t>(j)])]
        .rule;
  };
  grid.cell_label.resize(cells);
  grid.cell_weight.resize(cells);
  grid.cell_noise.resize(static_cast<Eigen::Index>(cells), q);

  std::vector<std::size_t> index(static_cast<std::size_t>(q), 0);
  std::size_t c = 0;
  for (Label y : {-1, 1}) {
    const double wy = y < 0 ? spec.rho : 1.0 - spec.rho;
    std::fill(index.begin(), index.end(), 0);
    for (std::size_t j = 0; j < per_label; ++j, ++c) {
      double w = wy;
      for (int k = 0; k < q; ++k) {
        const auto& rule = factor(k);
        const std::size_t ik = index[static_cast<std::size_t>(k)];
        w *= rule.weights[ik];
        grid.cell_noise(static_cast<Eigen::Index>(c), k) = rule.nodes[ik];
      }
      grid.cell_label[c] = y;
      grid.cell_weight[c] = w;
      // odometer increment
      for (int k = q - 1; k >= 0; --k) {
        auto& ik = index[static_cast<std::size_t>(k)];
        if (++ik < factor(k).size()) break;
        ik = 0;
      }
    }
  }
  return grid;
}

}  // namespace lfmm
