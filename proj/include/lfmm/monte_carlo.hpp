// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lfmm/common.hpp"
#include "lfmm/erm.hpp"
#include "lfmm/loss.hpp"
#include "lfmm/model.hpp"
#include "lfmm/random.hpp"

namespace lfmm {

/// Runs task(i) for i in [0, count) on `workers` threads. Each index is
/// processed exactly once; output ordering is the caller's responsibility
/// (write into slot i).
inline void parallel_for(int count, int workers,
                         const std::function<void(int)>& task) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = next++; i < count; i = next++) task(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Draws (y, beta^T x) for fresh x ~ spec without forming x.
///
/// beta^T x = y beta^T mu + sum_k (V^T beta)_k e_k. The Gaussian factors
/// contribute one N(0, sum_k w_k^2) draw; non-Gaussian factors are drawn
/// individually. The law is exactly that of beta^T x.
class ScoreSampler {
 public:
  ScoreSampler(const LfmmSpec& spec, const Vector& beta) : rho_(spec.rho) {
    shift_ = class_mean(spec).dot(beta);
    const Vector w = spec.V.transpose() * beta;
    double gaussian_var = 0.0;
    for (int k = 0; k < spec.p; ++k) {
      const NoiseLaw law = spec.noise_laws[static_cast<std::size_t>(k)];
      if (law == NoiseLaw::gaussian) {
        gaussian_var += w(k) * w(k);
      } else {
        weights_.push_back(w(k));
        laws_.push_back(law);
      }
    }
    gaussian_sd_ = std::sqrt(gaussian_var);
  }

  struct Draw {
    Label y;
    double score;
  };

  Draw operator()(Rng& rng) const {
    Draw d;
    d.y = draw_label(rho_, rng);
    double acc = d.y * shift_;
    std::normal_distribution<double> n01;
    acc += gaussian_sd_ * n01(rng);
    for (std::size_t k = 0; k < laws_.size(); ++k) acc += weights_[k] * draw(laws_[k], rng);
    d.score = acc;
    return d;
  }

 private:
  double rho_;
  double shift_ = 0.0;
  double gaussian_sd_ = 0.0;
  std::vector<double> weights_;
  std::vector<NoiseLaw> laws_;
};

/// Fraction of y * score > 0 over n_test fresh samples. Ties count as errors.
inline double test_accuracy(const LfmmSpec& spec, const Vector& beta, int n_test,
                            std::uint64_t seed,
                            std::vector<double>* scores = nullptr) {
  ScoreSampler sampler(spec, beta);
  Rng rng(seed);
  long correct = 0;
  if (scores) scores->resize(static_cast<std::size_t>(n_test));
  for (int i = 0; i < n_test; ++i) {
    const auto d = sampler(rng);
    if (d.y * d.score > 0.0) ++correct;
    if (scores) (*scores)[static_cast<std::size_t>(i)] = d.score;
  }
  return static_cast<double>(correct) / n_test;
}

inline double training_accuracy(const Dataset& data, const Vector& beta) {
  const Vector scores = data.X.transpose() * beta;
  long correct = 0;
  for (int i = 0; i < data.size(); ++i)
    if (data.y(i) * scores(i) > 0.0) ++correct;
  return static_cast<double>(correct) / data.size();
}

struct TrialResult {
  int index = 0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double stationarity = 0.0;
  int newton_iterations = 0;
  bool ok = true;
  std::string error;
  Vector beta;                  // kept only when requested
  std::vector<double> scores;   // kept only when requested
};

struct McReport {
  std::uint64_t seed = 0;
  std::vector<TrialResult> trials;
  double mean_test = 0.0;
  double std_test = 0.0;
  double mean_train = 0.0;
  double std_train = 0.0;
  int failed = 0;

  int succeeded() const { return static_cast<int>(trials.size()) - failed; }
  /// std / sqrt(successful trials).
  double standard_error() const {
    return succeeded() > 0 ? std_test / std::sqrt(static_cast<double>(succeeded()))
                           : 0.0;
  }
};

struct TrialOptions {
  int n = 0;
  int n_test = 100000;
  int trials = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  bool keep_beta = false;
  bool keep_scores = false;
  TrainSettings train;
};

namespace detail {

inline void summarize(McReport& report) {
  std::vector<double> test, train;
  report.failed = 0;
  for (const auto& t : report.trials) {
    if (!t.ok) {
      ++report.failed;
      continue;
    }
    test.push_back(t.test_accuracy);
    train.push_back(t.train_accuracy);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
  };
  stats(test, report.mean_test, report.std_test);
  stats(train, report.mean_train, report.std_train);
}

}  // namespace detail

/// Trains on samples of `train_spec` and evaluates on fresh samples of
/// `test_spec`, once per trial. Trials use seeds derived from opts.seed and
/// the trial index, so results do not depend on the worker count.
inline McReport cross_test(const LfmmSpec& train_spec, const LfmmSpec& test_spec,
                           const Loss& loss, double lambda,
                           const TrialOptions& opts) {
  if (opts.trials < 1) throw ConfigError("run_trials: trials must be >= 1");
  if (opts.n < 1) throw ConfigError("run_trials: n must be >= 1");
  if (opts.n_test < 1) throw ConfigError("run_trials: n_test must be >= 1");
  if (train_spec.p != test_spec.p)
    throw ConfigError("cross_test: train and test specs must share p");
  McReport report;
  report.seed = opts.seed;
  report.trials.resize(static_cast<std::size_t>(opts.trials));
  parallel_for(opts.trials, opts.workers, [&](int i) {
    TrialResult& t = report.trials[static_cast<std::size_t>(i)];
    t.index = i;
    t.seed = derive_seed(opts.seed, stream::kTrial, static_cast<std::uint64_t>(i));
    try {
      const Dataset data =
          sample_dataset(train_spec, opts.n, derive_seed(t.seed, stream::kTrain));
      const TrainedClassifier clf = train(data, loss, lambda, opts.train);
      t.newton_iterations = clf.newton_iterations;
      t.stationarity = stationarity_residual(clf, data, loss, lambda);
      t.train_accuracy = training_accuracy(data, clf.beta);
      t.test_accuracy =
          test_accuracy(test_spec, clf.beta, opts.n_test,
                        derive_seed(t.seed, stream::kTest),
                        opts.keep_scores ? &t.scores : nullptr);
      if (opts.keep_beta) t.beta = clf.beta;
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
  });
  detail::summarize(report);
  return report;
}

inline McReport run_trials(const LfmmSpec& spec, const Loss& loss, double lambda,
                           const TrialOptions& opts) {
  return cross_test(spec, spec, loss, lambda, opts);
}

}  // namespace lfmm
