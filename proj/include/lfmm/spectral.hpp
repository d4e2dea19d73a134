// SPDX-License-Identifier: Apache-2.0
//
// Resolvent algebra for Q(theta) = (lambda I + theta Sigma)^{-1}.
//
// Sigma = V V^T is diagonalized once, Sigma = U diag(sigma_i) U^T. Every
// quantity the fixed-point iteration needs is then a sum over the spectrum:
//
//   kappa  = (1/n) sum_i sigma_i / (lambda + theta sigma_i)
//   sigma2 = (gamma^2 / N) sum_i (sigma_i / (lambda + theta sigma_i))^2
//   psi    = W^T diag(1 / (lambda + theta sigma_i)) W (eta s + omega)
//   m      = s^T psi
//
// with W = U^T V_info (p x q) and N = n (default) or p.
#pragma once

#include <cmath>
#include <stdexcept>

#include "lfmm/common.hpp"
#include "lfmm/model.hpp"

namespace lfmm {

/// Normalization of the trace in sigma^2.
enum class TraceNormalization { samples, dimension };

struct SignalResponse {
  double m = 0.0;
  Vector psi;
};

class SpectralCache {
 public:
  SpectralCache(const LfmmSpec& spec, int n, double lambda,
                TraceNormalization norm = TraceNormalization::samples)
      : n_(n), p_(spec.p), lambda_(lambda), norm_(norm) {
    if (n < 1) throw ConfigError("SpectralCache: n must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("SpectralCache: lambda must be > 0");
    const Matrix sigma = class_covariance(spec);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    if (eig.info() != Eigen::Success)
      throw NumericalError("SpectralCache: eigendecomposition of Sigma failed");
    // Eigen returns ascending order; store descending.
    eigs_ = eig.eigenvalues().reverse();
    basis_ = eig.eigenvectors().rowwise().reverse();
    if (eigs_(p_ - 1) <= 0.0)
      throw NumericalError("SpectralCache: Sigma is not positive definite");
    s_ = spec.s;
    informative_ = spec.informative_columns();
    mean_ = class_mean(spec);
    gram_ = informative_.transpose() * informative_;
    projection_ = basis_.transpose() * informative_;
    trace_ = sigma.trace();
  }

  int n() const { return n_; }
  int p() const { return p_; }
  int q() const { return static_cast<int>(s_.size()); }
  double lambda() const { return lambda_; }
  TraceNormalization normalization() const { return norm_; }

  /// Descending eigenvalues of Sigma.
  const Vector& sigma_eigs() const { return eigs_; }
  /// Orthonormal eigenvectors, column i pairs with sigma_eigs()(i).
  const Matrix& eigenbasis() const { return basis_; }
  /// G = V_info^T V_info.
  const Matrix& gram() const { return gram_; }
  const Vector& signal() const { return s_; }
  const Matrix& informative_columns() const { return informative_; }
  const Vector& mean() const { return mean_; }
  /// trace(V V^T) computed directly, for consistency checks.
  double direct_trace() const { return trace_; }

  /// Same spectrum with a different ridge penalty.
  SpectralCache with_lambda(double lambda) const {
    if (!(lambda > 0.0)) throw ConfigError("SpectralCache: lambda must be > 0");
    SpectralCache copy = *this;
    copy.lambda_ = lambda;
    return copy;
  }

  SpectralCache with_normalization(TraceNormalization norm) const {
    SpectralCache copy = *this;
    copy.norm_ = norm;
    return copy;
  }

  /// (1/n) tr(Sigma Q).
  double kappa_of_theta(double theta) const {
    check_theta(theta);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eigs_.size(); ++i)
      acc += eigs_(i) / (lambda_ + theta * eigs_(i));
    return acc / n_;
  }

  /// (gamma^2 / N) tr((Q Sigma)^2).
  double sigma2_of(double theta, double gamma) const {
    check_theta(theta);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eigs_.size(); ++i) {
      const double r = eigs_(i) / (lambda_ + theta * eigs_(i));
      acc += r * r;
    }
    const double denom = norm_ == TraceNormalization::samples ? n_ : p_;
    return gamma * gamma * acc / denom;
  }

  /// M(theta) = V_info^T Q V_info.
  Matrix informative_resolvent(double theta) const {
    check_theta(theta);
    Vector d(p_);
    for (int i = 0; i < p_; ++i) d(i) = 1.0 / (lambda_ + theta * eigs_(i));
    return projection_.transpose() * d.asDiagonal() * projection_;
  }

  /// psi_k = v_k^T Q xi and m = mu^T Q xi for xi = eta mu + sum omega_k v_k.
  SignalResponse signal_response(double theta, double eta,
                                 const Vector& omega) const {
    if (omega.size() != q())
      throw std::invalid_argument("signal_response: omega must have length q");
    SignalResponse out;
    out.psi = informative_resolvent(theta) * (eta * s_ + omega);
    out.m = s_.dot(out.psi);
    return out;
  }

  /// Closed form through the q x q Gram matrix, psi = G (lambda I + theta G)^-1
  /// (eta s + omega). Exact only when Sigma leaves span(v_1..v_q) invariant,
  /// i.e. when the signal and noise subspaces are orthogonal.
  SignalResponse signal_response_subspace(double theta, double eta,
                                          const Vector& omega) const {
    check_theta(theta);
    const int qq = q();
    const Matrix a = lambda_ * Matrix::Identity(qq, qq) + theta * gram_;
    SignalResponse out;
    out.psi = gram_ * a.ldlt().solve(eta * s_ + omega);
    out.m = s_.dot(out.psi);
    return out;
  }

  /// Q x.
  Vector apply_resolvent(double theta, const Vector& x) const {
    check_theta(theta);
    Vector coeff = basis_.transpose() * x;
    for (int i = 0; i < p_; ++i) coeff(i) /= lambda_ + theta * eigs_(i);
    return basis_ * coeff;
  }

  /// Sigma^{1/2} x with the symmetric square root.
  Vector apply_sqrt_sigma(const Vector& x) const {
    Vector coeff = basis_.transpose() * x;
    for (int i = 0; i < p_; ++i) coeff(i) *= std::sqrt(eigs_(i));
    return basis_ * coeff;
  }

 private:
  static void check_theta(double theta) {
    if (!(theta >= 0.0)) throw std::domain_error("theta must be >= 0");
  }

  int n_;
  int p_;
  double lambda_;
  TraceNormalization norm_;
  Vector eigs_;
  Matrix basis_;
  Vector s_;
  Matrix informative_;
  Vector mean_;
  Matrix gram_;
  Matrix projection_;
  double trace_ = 0.0;
};

}  // namespace lfmm
