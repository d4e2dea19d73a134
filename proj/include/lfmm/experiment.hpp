// SPDX-License-Identifier: Apache-2.0
//
// Config-driven experiments behind the `lfmm` command-line tool. Each command
// computes everything first and then writes its files from the calling
// thread, so output order does not depend on the worker count.
//
// Exit codes: 0 success, 1 validation or convergence failure, 2 bad config
// or arguments.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lfmm/common.hpp"
#include "lfmm/erm.hpp"
#include "lfmm/fixed_point.hpp"
#include "lfmm/loss.hpp"
#include "lfmm/model.hpp"
#include "lfmm/model_io.hpp"
#include "lfmm/monte_carlo.hpp"
#include "lfmm/quadrature.hpp"
#include "lfmm/random.hpp"
#include "lfmm/spectral.hpp"
#include "lfmm/theory.hpp"

namespace lfmm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct ExperimentConfig {
  json model;
  std::filesystem::path base_dir;
  std::string loss = "square";
  std::vector<double> lambdas;
  int n = 0;
  int n_test = 100000;
  int trials = 1;
  int gh_points = 48;
  SolverSettings solver;
  int restarts = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  TraceNormalization normalization = TraceNormalization::samples;
  int bins = 200;
  std::filesystem::path out = "out";
};

/// 2^from, 2^(from+step), ..., 2^to.
inline std::vector<double> log2_sweep(double from, double to, double step = 1.0) {
  if (!(step > 0.0) || to < from) throw ConfigError("lambda sweep: bad range");
  std::vector<double> out;
  for (double e = from; e <= to + 1e-9; e += step) out.push_back(std::exp2(e));
  return out;
}

namespace detail {

inline std::vector<double> parse_lambdas(const json& j) {
  if (j.is_null()) return log2_sweep(-9, 6);
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    out = j.get<std::vector<double>>();
  } else if (j.is_object()) {
    out = log2_sweep(j.value("log2_from", -9.0), j.value("log2_to", 6.0),
                     j.value("log2_step", 1.0));
  } else {
    throw ConfigError("lambda must be a number, a list or a log2 sweep object");
  }
  if (out.empty()) throw ConfigError("lambda list is empty");
  for (double l : out)
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("lambda values must be > 0");
  return out;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j,
                                         const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  if (j.contains("model")) {
    c.model = j.at("model");
  } else if (j.contains("model_file")) {
    const std::filesystem::path path = base_dir / j.at("model_file").get<std::string>();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file " + path.string());
    c.model = json::parse(in);
  } else {
    throw ConfigError("config needs \"model\" or \"model_file\"");
  }
  try {
    c.loss = j.value("loss", c.loss);
    c.lambdas = detail::parse_lambdas(j.value("lambda", json()));
    c.n = j.value("n", 0);
    c.n_test = j.value("n_test", c.n_test);
    c.trials = j.value("trials", c.trials);
    c.gh_points = j.value("gh_points", c.gh_points);
    c.restarts = j.value("restarts", c.restarts);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.bins = j.value("bins", c.bins);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    const json solver = j.value("solver", json::object());
    c.solver.damping = solver.value("damping", c.solver.damping);
    c.solver.tol = solver.value("tol", c.solver.tol);
    c.solver.max_iter = solver.value("max_iter", c.solver.max_iter);
    const auto norm = j.value("normalization", std::string("samples"));
    if (norm == "samples") c.normalization = TraceNormalization::samples;
    else if (norm == "dimension") c.normalization = TraceNormalization::dimension;
    else throw ConfigError("normalization must be 'samples' or 'dimension'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Loss::from_name(c.loss);  // validates the name
  if (c.n < 1) throw ConfigError("config: n must be >= 1");
  if (c.trials < 1) throw ConfigError("config: trials must be >= 1");
  if (c.gh_points < kMinGridPoints)
    throw ConfigError("config: gh_points must be >= " + std::to_string(kMinGridPoints));
  if (c.bins < 1) throw ConfigError("config: bins must be >= 1");
  if (c.workers < 1) throw ConfigError("config: workers must be >= 1");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Serialization

inline std::vector<double> to_std(const Vector& v) {
  return {v.data(), v.data() + v.size()};
}

/// Order parameters, derived scalars, diagnostics and theoretical accuracies.
inline json fixed_point_to_json(const FixedPoint& fp, const LfmmSpec& spec,
                                const Loss& loss, double lambda, int gh_points) {
  const ScoreLaw law = ScoreLaw::from(fp.derived, spec);
  json j = {{"lambda", lambda},
            {"loss", std::string(loss.name())},
            {"theta", fp.params.theta},
            {"eta", fp.params.eta},
            {"gamma", fp.params.gamma},
            {"omega", to_std(fp.params.omega)},
            {"kappa", fp.derived.kappa},
            {"m", fp.derived.m},
            {"sigma2", fp.derived.sigma2},
            {"psi", to_std(fp.derived.psi)},
            {"iterations", fp.diagnostics.iterations},
            {"residual", fp.diagnostics.final_residual},
            {"converged", fp.diagnostics.converged},
            {"theta_clamps", fp.diagnostics.theta_clamps}};
  if (fp.diagnostics.converged) {
    j["test_accuracy"] = generalization_accuracy(law, gh_points);
    j["train_accuracy"] = training_accuracy(law, loss, fp.derived.kappa, gh_points);
  }
  return j;
}

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& path() const { return dir_; }

  void write_json(const std::string& name, const json& j) const {
    std::ofstream out(dir_ / name);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    out << j.dump(2) << '\n';
  }

  std::ofstream open(const std::string& name) const {
    std::ofstream out(dir_ / name);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    out.precision(10);
    return out;
  }

  /// Timestamps go here and nowhere else.
  void write_meta(const std::string& command) const {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
    write_json("meta.json", {{"command", command}, {"finished_utc", ts.str()}});
  }

  void remove(const std::string& name) const {
    std::error_code ec;
    std::filesystem::remove(dir_ / name, ec);
  }

 private:
  std::filesystem::path dir_;
};

namespace detail {

struct Prepared {
  LfmmSpec spec;
  ValidationReport validation;
  Loss loss;
};

/// Builds and validates the model. On error-level violations writes
/// error.json and returns nullopt.
inline std::optional<Prepared> prepare(const ExperimentConfig& cfg,
                                       const OutputDir& out) {
  out.remove("error.json");
  Prepared p{spec_from_json(cfg.model, cfg.base_dir), {}, Loss::from_name(cfg.loss)};
  p.validation = validate_spec(p.spec);
  if (!p.validation.passed()) {
    out.write_json("error.json", {{"error", "validation"},
                                  {"violations", p.validation.violations()},
                                  {"validation", validation_to_json(p.validation)}});
    return std::nullopt;
  }
  return p;
}

inline void write_convergence_error(const OutputDir& out,
                                    const std::vector<double>& lambdas,
                                    const std::vector<FixedPoint>& fps) {
  json failed = json::array();
  for (std::size_t i = 0; i < fps.size(); ++i)
    if (!fps[i].diagnostics.converged)
      failed.push_back({{"lambda", lambdas[i]},
                        {"iterations", fps[i].diagnostics.iterations},
                        {"residual", fps[i].diagnostics.final_residual}});
  out.write_json("error.json", {{"error", "convergence"}, {"failed", failed}});
}

/// Solves at every lambda, spreading lambdas over the worker pool.
inline std::vector<FixedPoint> solve_sweep(const ExperimentConfig& cfg,
                                           const Prepared& p) {
  const SpectralCache base(p.spec, cfg.n, cfg.lambdas.front(), cfg.normalization);
  const ExpectationGrid grid = build_grid(p.spec, cfg.gh_points);
  std::vector<FixedPoint> out(cfg.lambdas.size());
  parallel_for(static_cast<int>(cfg.lambdas.size()), cfg.workers, [&](int i) {
    const SpectralCache cache = base.with_lambda(cfg.lambdas[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(i)] =
        solve_with_restarts(cache, grid, p.loss, cfg.restarts,
                            derive_seed(cfg.seed, stream::kRestart,
                                        static_cast<std::uint64_t>(i)),
                            cfg.solver)
            .best;
  });
  return out;
}

inline std::string indexed_name(const std::string& stem, std::size_t i) {
  std::ostringstream s;
  s << stem << '_' << std::setw(3) << std::setfill('0') << i << ".json";
  return s.str();
}

inline bool all_converged(const std::vector<FixedPoint>& fps) {
  for (const auto& f : fps)
    if (!f.diagnostics.converged) return false;
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

/// Solves the fixed point at each lambda. A single lambda writes
/// fixed_point.json; a sweep writes fixed_point_000.json, ... and sweep.csv.
inline int cmd_solve(const ExperimentConfig& cfg) {
  const OutputDir out(cfg.out);
  const auto prepared = detail::prepare(cfg, out);
  if (!prepared) return kExitFailure;
  const auto& p = *prepared;
  const auto fps = detail::solve_sweep(cfg, p);

  if (fps.size() == 1) {
    json j = fixed_point_to_json(fps[0], p.spec, p.loss, cfg.lambdas[0], cfg.gh_points);
    j["validation"] = validation_to_json(p.validation);
    out.write_json("fixed_point.json", j);
  } else {
    auto csv = out.open("sweep.csv");
    csv << "lambda,theta,eta,gamma,kappa,m,sigma2,test_accuracy,train_accuracy,"
           "iterations,converged\n";
    for (std::size_t i = 0; i < fps.size(); ++i) {
      const json j =
          fixed_point_to_json(fps[i], p.spec, p.loss, cfg.lambdas[i], cfg.gh_points);
      out.write_json(detail::indexed_name("fixed_point", i), j);
      csv << cfg.lambdas[i] << ',' << fps[i].params.theta << ','
          << fps[i].params.eta << ',' << fps[i].params.gamma << ','
          << fps[i].derived.kappa << ',' << fps[i].derived.m << ','
          << fps[i].derived.sigma2 << ',' << j.value("test_accuracy", NAN) << ','
          << j.value("train_accuracy", NAN) << ',' << fps[i].diagnostics.iterations
          << ',' << fps[i].diagnostics.converged << '\n';
    }
  }
  out.write_meta("solve");
  if (!detail::all_converged(fps)) {
    detail::write_convergence_error(out, cfg.lambdas, fps);
    return kExitFailure;
  }
  return kExitOk;
}

/// Theory versus Monte Carlo at each lambda: sweep.csv joins both, trials.csv
/// lists every trial.
inline int cmd_simulate(const ExperimentConfig& cfg) {
  const OutputDir out(cfg.out);
  const auto prepared = detail::prepare(cfg, out);
  if (!prepared) return kExitFailure;
  const auto& p = *prepared;
  const auto fps = detail::solve_sweep(cfg, p);

  TrialOptions opts;
  opts.n = cfg.n;
  opts.n_test = cfg.n_test;
  opts.trials = cfg.trials;
  opts.seed = cfg.seed;
  opts.workers = cfg.workers;
  std::vector<McReport> reports;
  for (double lambda : cfg.lambdas) reports.push_back(run_trials(p.spec, p.loss, lambda, opts));

  auto sweep = out.open("sweep.csv");
  sweep << "lambda,theory_acc,emp_mean,emp_std,z_score,theory_train_acc,"
           "emp_train_mean,emp_train_std,failed_trials,converged\n";
  auto trials = out.open("trials.csv");
  trials << "lambda,trial,seed,train_accuracy,test_accuracy,stationarity,"
            "newton_iterations,ok,error\n";
  int failed = 0;
  for (std::size_t i = 0; i < fps.size(); ++i) {
    const McReport& r = reports[i];
    failed += r.failed;
    double theory = NAN, theory_train = NAN, z = NAN;
    if (fps[i].diagnostics.converged) {
      const ScoreLaw law = ScoreLaw::from(fps[i].derived, p.spec);
      theory = generalization_accuracy(law, cfg.gh_points);
      theory_train = training_accuracy(law, p.loss, fps[i].derived.kappa, cfg.gh_points);
      const double se = r.standard_error();
      if (se > 0.0) z = (r.mean_test - theory) / se;
    }
    sweep << cfg.lambdas[i] << ',' << theory << ',' << r.mean_test << ',' << r.std_test
          << ',' << z << ',' << theory_train << ',' << r.mean_train << ','
          << r.std_train << ',' << r.failed << ',' << fps[i].diagnostics.converged
          << '\n';
    for (const auto& t : r.trials)
      trials << cfg.lambdas[i] << ',' << t.index << ',' << t.seed << ','
             << t.train_accuracy << ',' << t.test_accuracy << ',' << t.stationarity
             << ',' << t.newton_iterations << ',' << t.ok << ",\"" << t.error
             << "\"\n";
  }
  out.write_meta("simulate");
  if (!detail::all_converged(fps)) {
    detail::write_convergence_error(out, cfg.lambdas, fps);
    return kExitFailure;
  }
  if (failed > 0) {
    out.write_json("error.json", {{"error", "training"}, {"failed_trials", failed}});
    return kExitFailure;
  }
  return kExitOk;
}

/// Trains one classifier at the first lambda, scores n_test fresh points and
/// writes the binned histogram next to the theoretical density on the same
/// bin centers.
inline int cmd_histogram(const ExperimentConfig& cfg) {
  if (cfg.n_test < 1) throw ConfigError("histogram: n_test must be >= 1");
  const OutputDir out(cfg.out);
  const auto prepared = detail::prepare(cfg, out);
  if (!prepared) return kExitFailure;
  const auto& p = *prepared;
  const double lambda = cfg.lambdas.front();

  ExperimentConfig single = cfg;
  single.lambdas = {lambda};
  const FixedPoint fp = detail::solve_sweep(single, p).front();
  if (!fp.diagnostics.converged) {
    detail::write_convergence_error(out, single.lambdas, {fp});
    return kExitFailure;
  }
  const ScoreLaw law = ScoreLaw::from(fp.derived, p.spec);
  const ScoreMixture mix(law, cfg.gh_points);

  TrialOptions opts;
  opts.n = cfg.n;
  opts.n_test = cfg.n_test;
  opts.trials = 1;
  opts.seed = cfg.seed;
  opts.keep_scores = true;
  McReport report = run_trials(p.spec, p.loss, lambda, opts);
  TrialResult& trial = report.trials.front();
  if (!trial.ok) {
    out.write_json("error.json", {{"error", "training"}, {"detail", trial.error}});
    return kExitFailure;
  }
  std::vector<double>& scores = trial.scores;
  const double ks = ks_distance(scores, [&](double x) { return mix.cdf(x); });

  // scores are sorted now; bin over [min, max] widened by one bin
  const double span = scores.back() - scores.front();
  const double width = span > 0.0 ? span / cfg.bins : 1.0;
  const double lo = scores.front() - width;
  const int bins = cfg.bins + 2;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double x : scores) {
    const int b = std::min(bins - 1, static_cast<int>((x - lo) / width));
    ++counts[static_cast<std::size_t>(b)];
  }
  std::vector<double> centers(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) centers[static_cast<std::size_t>(b)] = lo + (b + 0.5) * width;
  const auto density = score_density(law, std::nullopt, centers, cfg.gh_points);
  const auto train_density = score_density(
      law, TrainingScores{p.loss, fp.derived.kappa}, centers, cfg.gh_points);

  auto hist = out.open("hist_empirical.csv");
  hist << "bin_left,bin_right,center,count,density\n";
  const double total = static_cast<double>(scores.size());
  for (int b = 0; b < bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    hist << lo + b * width << ',' << lo + (b + 1) * width << ',' << centers[i] << ','
         << counts[i] << ',' << counts[i] / (total * width) << '\n';
  }
  auto theory = out.open("density_theory.csv");
  theory << "x,density,train_density\n";
  for (std::size_t i = 0; i < centers.size(); ++i)
    theory << centers[i] << ',' << density[i] << ',' << train_density[i] << '\n';

  auto moments_json = [](const std::array<double, 4>& m) {
    return json{{"mean", m[0]}, {"variance", m[1]}, {"skewness", m[2]}, {"kurtosis", m[3]}};
  };
  json summary = {
      {"lambda", lambda},
      {"ks_distance", ks},
      {"n_test", cfg.n_test},
      {"empirical_test_accuracy", trial.test_accuracy},
      {"theory_test_accuracy", generalization_accuracy(law, cfg.gh_points)},
      {"theory_moments", moments_json(mix.moments())},
      {"fixed_point", fixed_point_to_json(fp, p.spec, p.loss, lambda, cfg.gh_points)}};
  for (Label y : {-1, 1})
    if (mix.class_weight(y) > 0.0)
      summary["theory_moments_class_" + std::string(y > 0 ? "pos" : "neg")] =
          moments_json(mix.moments(y));
  out.write_json("histogram.json", summary);
  out.write_meta("histogram");
  return kExitOk;
}

/// Theoretical universality audit plus the empirical cross test: classifiers
/// trained on the equivalent GMM and on the LFMM, both tested on the LFMM.
inline int cmd_universality(const ExperimentConfig& cfg) {
  const OutputDir out(cfg.out);
  const auto prepared = detail::prepare(cfg, out);
  if (!prepared) return kExitFailure;
  const auto& p = *prepared;
  const double lambda = cfg.lambdas.front();
  const SpectralCache cache(p.spec, cfg.n, lambda, cfg.normalization);

  UniversalityVerdict v;
  try {
    v = universality_audit(p.spec, p.loss, cache, cfg.gh_points, cfg.solver);
  } catch (const NumericalError& e) {
    out.write_json("error.json", {{"error", "convergence"}, {"detail", e.what()}});
    return kExitFailure;
  }

  TrialOptions opts;
  opts.n = cfg.n;
  opts.n_test = cfg.n_test;
  opts.trials = cfg.trials;
  opts.seed = cfg.seed;
  opts.workers = cfg.workers;
  const LfmmSpec gmm = equivalent_gmm(p.spec);
  const McReport on_lfmm = cross_test(p.spec, p.spec, p.loss, lambda, opts);
  const McReport on_gmm = cross_test(gmm, p.spec, p.loss, lambda, opts);
  const double joint_se = std::hypot(on_lfmm.standard_error(), on_gmm.standard_error());
  const double gap = on_gmm.mean_test - on_lfmm.mean_test;

  json deltas = json::object();
  for (const auto& [name, d] : v.parameter_deltas) deltas[name] = d;
  json j = {
      {"lambda", lambda},
      {"loss", std::string(p.loss.name())},
      {"classifier_universal", v.classifier_universal},
      {"in_distribution_universal", v.in_distribution_universal},
      {"parameter_deltas", deltas},
      {"max_parameter_delta", v.max_parameter_delta},
      {"accuracy_lfmm", v.accuracy_lfmm},
      {"accuracy_gmm", v.accuracy_gmm},
      {"accuracy_delta", v.accuracy_delta},
      {"lfmm", fixed_point_to_json(v.lfmm, p.spec, p.loss, lambda, cfg.gh_points)},
      {"gmm", fixed_point_to_json(v.gmm, gmm, p.loss, lambda, cfg.gh_points)},
      {"cross_test",
       {{"trials", cfg.trials},
        {"train_lfmm_mean", on_lfmm.mean_test},
        {"train_lfmm_std", on_lfmm.std_test},
        {"train_gmm_mean", on_gmm.mean_test},
        {"train_gmm_std", on_gmm.std_test},
        {"gap", gap},
        {"joint_standard_error", joint_se},
        {"z_score", joint_se > 0.0 ? gap / joint_se : 0.0},
        {"failed_trials", on_lfmm.failed + on_gmm.failed}}}};
  out.write_json("universality.json", j);
  out.write_meta("universality");
  if (on_lfmm.failed + on_gmm.failed > 0) {
    out.write_json("error.json", {{"error", "training"},
                                  {"failed_trials", on_lfmm.failed + on_gmm.failed}});
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace lfmm
