// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "lfmm/model.hpp"

using namespace lfmm;

namespace {

LfmmSpec haar_spec(int p, std::vector<double> s, NoiseLaw first, NoiseLaw rest,
                   std::uint64_t seed = 3) {
  LfmmSpec spec;
  spec.p = p;
  spec.q = static_cast<int>(s.size());
  spec.s = Eigen::Map<const Vector>(s.data(), spec.q);
  spec.V = build_haar_orthogonal(p, seed);
  spec.noise_laws.assign(static_cast<std::size_t>(p), rest);
  spec.noise_laws[0] = first;
  return spec;
}

}  // namespace

TEST(Model, HaarIsOrthogonalAndSeeded) {
  const Matrix h = build_haar_orthogonal(60, 5);
  EXPECT_LT((h.transpose() * h - Matrix::Identity(60, 60)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(h, build_haar_orthogonal(60, 5));
  EXPECT_NE(h, build_haar_orthogonal(60, 6));
}

TEST(Model, HaarFirstEntryIsUnbiased) {
  // Haar columns are uniform on the sphere: E[h_11] = 0, E[h_11^2] = 1/p.
  const int p = 10, draws = 4000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = build_haar_orthogonal(p, 1000 + i)(0, 0);
    m1 += x;
    m2 += x * x;
  }
  m1 /= draws;
  m2 /= draws;
  EXPECT_NEAR(m1, 0.0, 4.0 * std::sqrt(1.0 / p / draws));
  EXPECT_NEAR(m2, 1.0 / p, 0.01);
}

TEST(Model, DiagScaledHaarScalesRows) {
  const double scales[] = {2.0, 3.0};
  const Matrix v = build_diag_scaled_haar(20, scales, 9);
  const Matrix sigma = v * v.transpose();
  EXPECT_NEAR(sigma(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(sigma(1, 1), 9.0, 1e-12);
  EXPECT_NEAR(sigma(2, 2), 1.0, 1e-12);
  EXPECT_NEAR(sigma(0, 1), 0.0, 1e-12);
}

TEST(Model, MeanCovarianceAndEquivalentGmm) {
  const LfmmSpec spec = haar_spec(30, {1.5, 0.5}, NoiseLaw::rademacher, NoiseLaw::uniform);
  const Vector mu = class_mean(spec);
  EXPECT_LT((mu - 1.5 * spec.V.col(0) - 0.5 * spec.V.col(1)).norm(), 1e-14);
  const LfmmSpec gmm = equivalent_gmm(spec);
  EXPECT_TRUE(informative_factors_gaussian(gmm));
  EXPECT_FALSE(informative_factors_gaussian(spec));
  EXPECT_EQ(class_covariance(gmm), class_covariance(spec));
  EXPECT_EQ(class_mean(gmm), mu);
}

TEST(Model, NoSignalSpec) {
  LfmmSpec spec = haar_spec(10, {}, NoiseLaw::gaussian, NoiseLaw::gaussian);
  EXPECT_EQ(spec.q, 0);
  EXPECT_EQ(class_mean(spec), Vector::Zero(10));
  EXPECT_TRUE(validate_spec(spec).passed());
}

TEST(Model, ValidationFlagsDuplicatedColumn) {
  LfmmSpec spec = haar_spec(12, {1.0}, NoiseLaw::gaussian, NoiseLaw::gaussian);
  spec.V.col(5) = spec.V.col(0);
  const ValidationReport r = validate_spec(spec);
  EXPECT_FALSE(r.passed());
  const auto v = r.violations();
  EXPECT_NE(std::find(v.begin(), v.end(), "rank"), v.end());
  EXPECT_NE(std::find(v.begin(), v.end(), "orthogonality"), v.end());
  EXPECT_NEAR(r.max_cross_cosine, 1.0, 1e-12);
}

TEST(Model, ValidationOtherChecks) {
  LfmmSpec spec = haar_spec(12, {1.0}, NoiseLaw::gaussian, NoiseLaw::gaussian);
  EXPECT_TRUE(validate_spec(spec).passed());
  EXPECT_TRUE(validate_spec(spec).find("orthogonality")->passed);

  LfmmSpec bad = spec;
  bad.s(0) = -1.0;
  EXPECT_FALSE(validate_spec(bad).find("signal_positive")->passed);
  bad = spec;
  bad.rho = 1.5;
  EXPECT_FALSE(validate_spec(bad).passed());
  bad = spec;
  bad.noise_laws.pop_back();
  EXPECT_FALSE(validate_spec(bad).find("dimensions")->passed);
  bad = spec;
  bad.V(0, 0) = NAN;
  EXPECT_FALSE(validate_spec(bad).passed());

  // Non-orthogonal but full rank: usable, reported as a warning.
  bad = spec;
  bad.V.col(1) += 0.3 * bad.V.col(0);
  const ValidationReport r = validate_spec(bad);
  EXPECT_TRUE(r.passed());
  EXPECT_FALSE(r.find("orthogonality")->passed);
  EXPECT_EQ(r.find("orthogonality")->severity, Severity::warning);
}

TEST(Model, NoiseLawsAreStandardized) {
  Rng rng(17);
  const int draws = 200000;
  for (NoiseLaw law : {NoiseLaw::gaussian, NoiseLaw::rademacher, NoiseLaw::uniform}) {
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < draws; ++i) {
      const double x = draw(law, rng);
      m1 += x;
      m2 += x * x;
      m4 += x * x * x * x;
    }
    m1 /= draws;
    m2 /= draws;
    m4 /= draws;
    EXPECT_NEAR(m1, 0.0, 0.01) << to_string(law);
    EXPECT_NEAR(m2, 1.0, 0.01) << to_string(law);
    EXPECT_NEAR(m4, fourth_moment(law), 0.06) << to_string(law);
  }
  EXPECT_EQ(parse_noise_law("normal"), NoiseLaw::gaussian);
  EXPECT_THROW(parse_noise_law("cauchy"), ConfigError);
}

TEST(Model, SampledClassStatistics) {
  const LfmmSpec spec = haar_spec(8, {2.0}, NoiseLaw::rademacher, NoiseLaw::uniform);
  const int n = 100000;
  const Dataset data = sample_dataset(spec, n, 21);
  ASSERT_EQ(data.X.rows(), 8);
  ASSERT_EQ(data.size(), n);
  Vector sum_pos = Vector::Zero(8), sum_neg = Vector::Zero(8);
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    if (data.y(i) > 0) {
      sum_pos += data.X.col(i);
      ++pos;
    } else {
      sum_neg += data.X.col(i);
    }
  }
  EXPECT_NEAR(static_cast<double>(pos) / n, 0.5, 4.0 * 0.5 / std::sqrt(n));
  const Vector mu = class_mean(spec);
  EXPECT_LT((sum_pos / pos - mu).cwiseAbs().maxCoeff(), 0.03);
  EXPECT_LT((sum_neg / (n - pos) + mu).cwiseAbs().maxCoeff(), 0.03);

  // class-conditional covariance
  Matrix centered = data.X - mu * data.y.cast<double>().transpose();
  const Matrix cov = centered * centered.transpose() / n;
  EXPECT_LT((cov - class_covariance(spec)).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Model, SamplingIsDeterministic) {
  const LfmmSpec spec = haar_spec(6, {1.0}, NoiseLaw::uniform, NoiseLaw::gaussian);
  const Dataset a = sample_dataset(spec, 50, 4);
  const Dataset b = sample_dataset(spec, 50, 4);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.X, sample_dataset(spec, 50, 5).X);
}
