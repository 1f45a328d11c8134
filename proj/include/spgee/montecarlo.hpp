#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "spgee/covariance.hpp"
#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/parallel.hpp"
#include "spgee/pipeline.hpp"

namespace spgee {

/// Deterministic 64-bit PRNG (splitmix64 core). Small, seedable, and
/// portable across platforms and thread counts; replication streams are
/// derived from (seed, replication index) so parallel and serial runs see
/// identical draws.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for one replication of a seeded study.
  static Rng for_replication(std::uint64_t seed, std::uint64_t rep) {
    Rng mixer(seed ^ (0x9E3779B97F4A7C15ULL * (rep + 1)));
    mixer.next();  // decorrelate nearby (seed, rep) pairs
    return Rng(mixer.next());
  }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + uniform() * (b - a); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Box--Muller transform (cosine branch).
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;  // guard log(0)
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

private:
  std::uint64_t state_;
};

enum class ZKind { Gaussian, Bernoulli };

/// Simulation design: scheduled times {0,...,T} with times 1..T each skipped
/// with probability skip_prob and every retained time perturbed by U(0,1);
/// covariates standard Gaussian with pairwise correlation covariate_corr
/// (or Bernoulli(0.5) treatment columns); errors a Gaussian process with
/// variance variance_scale * 0.25 * exp(t/12) and the given serial
/// correlation; responses assembled from the partially linear single-index
/// model.
struct SimConfig {
  int n = 50;
  int T = 12;
  double skip_prob = 0.2;
  VectorXd beta0 = (Eigen::Vector2d() << 2.0, 1.0).finished();
  VectorXd theta0 = (Eigen::Vector3d() << 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0).finished();
  std::function<double(double)> link = [](double u) { return 0.5 * std::exp(u); };
  CorrelationFamily corr = CorrelationFamily::ar1(0.9);
  double variance_scale = 1.0;  ///< 0 gives noiseless data
  double covariate_corr = 0.1;
  ZKind z_kind = ZKind::Gaussian;
  std::uint64_t seed = 20240501;
  int reps = 200;

  double variance_at_time(double t) const {
    return variance_scale * 0.25 * std::exp(t / 12.0);
  }

  void check() const {
    if (n < 2) throw ConfigError("simulation config: n must be >= 2");
    if (T < 0) throw ConfigError("simulation config: T must be >= 0");
    if (!(skip_prob >= 0.0 && skip_prob < 1.0))
      throw ConfigError("simulation config: skip_prob must lie in [0,1)");
    if (reps < 1) throw ConfigError("simulation config: reps must be >= 1");
    if (beta0.size() < 1 || theta0.size() < 1)
      throw ConfigError("simulation config: beta0 and theta0 must be nonempty");
    if (!(variance_scale >= 0.0))
      throw ConfigError("simulation config: variance_scale must be >= 0");
    if (!(covariate_corr > -1.0 && covariate_corr < 1.0))
      throw ConfigError("simulation config: covariate_corr must lie in (-1,1)");
    check_admissible(corr);
  }
};

namespace detail {

/// Lower Cholesky factor of the equicorrelation matrix (1-rho)I + rho J.
inline MatrixXd equicorrelation_factor(int dim, double rho) {
  MatrixXd c = MatrixXd::Constant(dim, dim, rho);
  c.diagonal().setOnes();
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw ConfigError("covariate correlation matrix is not positive definite");
  return llt.matrixL();
}

/// Lower factor of R for Gaussian-process sampling, with escalating diagonal
/// jitter if the numerical factorization fails.
inline MatrixXd sampling_factor(const MatrixXd& r) {
  MatrixXd work = r;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    double bump = kPdJitterRel * work.trace();
    if (!(bump > 0.0)) bump = kPdJitterRel;
    work.diagonal().array() += bump * std::pow(10.0, attempt);
  }
  throw DegenerateVarianceError(
      "gp_errors: covariance is not positive definite even after jitter");
}

}  // namespace detail

/// One draw from N(0, R) with R = Sigma^{1/2} C(phi) Sigma^{1/2}.
/// A vanishing covariance (noiseless configuration) yields exact zeros.
inline VectorXd gp_errors(const VectorXd& times,
                          const std::function<double(double)>& sigma2_fn,
                          const CorrelationFamily& family, Rng& rng) {
  const Eigen::Index m = times.size();
  VectorXd g(m);
  for (Eigen::Index j = 0; j < m; ++j) g[j] = rng.normal();

  VectorXd sd(m);
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double v = sigma2_fn(times[j]);
    if (!(v >= 0.0))
      throw DegenerateVarianceError("gp_errors: negative variance at t=" +
                                    std::to_string(times[j]));
    sd[j] = std::sqrt(v);
    total += v;
  }
  if (total <= 0.0) return VectorXd::Zero(m);

  const MatrixXd r =
      sd.asDiagonal() * correlation_matrix(family, times) * sd.asDiagonal();
  return detail::sampling_factor(r) * g;
}

/// Generates one replication of the design. Bit-identical for fixed
/// (config, rep_index) regardless of threading or platform.
inline LongitudinalDataset generate_dataset(const SimConfig& cfg,
                                            std::uint64_t rep_index) {
  cfg.check();
  const int d = static_cast<int>(cfg.beta0.size());
  const int p = static_cast<int>(cfg.theta0.size());
  Rng rng = Rng::for_replication(cfg.seed, rep_index);

  const MatrixXd joint_factor =
      cfg.z_kind == ZKind::Gaussian
          ? detail::equicorrelation_factor(d + p, cfg.covariate_corr)
          : MatrixXd();
  const MatrixXd x_factor =
      cfg.z_kind == ZKind::Bernoulli
          ? detail::equicorrelation_factor(p, cfg.covariate_corr)
          : MatrixXd();

  std::vector<SubjectBlock> subjects;
  subjects.reserve(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    std::vector<double> sched{0.0};  // time 0 is never skipped
    for (int t = 1; t <= cfg.T; ++t)
      if (!rng.bernoulli(cfg.skip_prob)) sched.push_back(static_cast<double>(t));
    const auto m = static_cast<Eigen::Index>(sched.size());

    SubjectBlock sub;
    sub.id = "s" + std::to_string(i + 1);
    sub.times.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) sub.times[j] = sched[j] + rng.uniform();

    sub.z.resize(m, d);
    sub.x.resize(m, p);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (cfg.z_kind == ZKind::Gaussian) {
        VectorXd g(d + p);
        for (Eigen::Index k = 0; k < d + p; ++k) g[k] = rng.normal();
        const VectorXd v = joint_factor * g;
        sub.z.row(j) = v.head(d).transpose();
        sub.x.row(j) = v.tail(p).transpose();
      } else {
        for (int k = 0; k < d; ++k)
          sub.z(j, k) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        VectorXd g(p);
        for (int k = 0; k < p; ++k) g[k] = rng.normal();
        sub.x.row(j) = (x_factor * g).transpose();
      }
    }

    const VectorXd e = gp_errors(
        sub.times, [&cfg](double t) { return cfg.variance_at_time(t); },
        cfg.corr, rng);
    sub.y.resize(m);
    for (Eigen::Index j = 0; j < m; ++j)
      sub.y[j] = sub.z.row(j).dot(cfg.beta0) +
                 cfg.link(sub.x.row(j).dot(cfg.theta0)) + e[j];
    subjects.push_back(std::move(sub));
  }
  return LongitudinalDataset(std::move(subjects), d, p);
}

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

/// Median of a vector (average of the middle pair for even lengths).
inline double median(VectorXd v) {
  if (v.size() == 0) throw Error("median of an empty vector");
  std::sort(v.data(), v.data() + v.size());
  const Eigen::Index m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Per-parameter bias, sample SD (n-1 denominator), and median absolute
/// deviation about the median (unscaled) over completed replications.
struct McSummary {
  VectorXd bias;
  VectorXd sd;
  VectorXd mad;
  int n_used = 0;
  int n_excluded = 0;
};

inline McSummary summarize(const MatrixXd& estimates, const VectorXd& truth) {
  if (estimates.rows() < 2)
    throw Error("summarize: need at least 2 completed replications");
  if (estimates.cols() != truth.size())
    throw DimensionError("summarize: truth length does not match estimates");
  McSummary s;
  s.n_used = static_cast<int>(estimates.rows());
  const Eigen::Index q = estimates.cols();
  s.bias.resize(q);
  s.sd.resize(q);
  s.mad.resize(q);
  const double n = static_cast<double>(estimates.rows());
  for (Eigen::Index k = 0; k < q; ++k) {
    const VectorXd col = estimates.col(k);
    const double mean = col.mean();
    s.bias[k] = mean - truth[k];
    s.sd[k] = std::sqrt((col.array() - mean).square().sum() / (n - 1.0));
    const double med = median(col);
    s.mad[k] = median((col.array() - med).abs().matrix());
  }
  return s;
}

enum class StudyWeights { Estimated, Identity, Oracle };

struct StudyOptions {
  double h = 0.0;   ///< link bandwidth (required)
  double h1 = 0.0;  ///< variance bandwidth (required for estimated weights)
  CorrelationKind fitted = CorrelationKind::Ar1;
  StudyWeights weights = StudyWeights::Estimated;
  bool run_sgee = true;
  int iterate = 1;
  int threads = 1;
  double max_failure_fraction = 0.2;
  Eigen::Index variance_grid_points = 20;
  KernelSpec spec = KernelSpec::epanechnikov();
  PulsOptions puls;
  SgeeOptions sgee;
  PhiSearchOptions phi;
};

/// Raw per-replication results plus summaries. Failed replications keep NaN
/// rows in the estimate matrices and false flags; summaries cover completed
/// rows only.
struct StudyResult {
  VectorXd truth;           ///< (beta0, theta0) with theta0 normalized
  MatrixXd puls_estimates;  ///< reps x (d+p)
  MatrixXd sgee_estimates;
  std::vector<char> puls_ok;
  std::vector<char> sgee_ok;
  MatrixXd phi_estimates;   ///< reps x dim(phi) for the fitted family
  MatrixXd sigma2_values;   ///< reps x grid points, estimated variance curve
  VectorXd variance_grid;   ///< fixed time grid for sigma2_values
  McSummary puls;
  McSummary sgee;
  int puls_failures = 0;
  int sgee_failures = 0;
  std::string first_failure;
};

/// True inverse covariance blocks for one generated dataset — the oracle
/// weights of the efficiency bound.
inline std::vector<MatrixXd> oracle_weight_blocks(const SimConfig& cfg,
                                                  const LongitudinalDataset& ds) {
  std::vector<MatrixXd> w;
  w.reserve(ds.n_subjects());
  for (const auto& sub : ds.subjects()) {
    VectorXd sd(sub.size());
    for (Eigen::Index j = 0; j < sub.size(); ++j) {
      const double v = cfg.variance_at_time(sub.times[j]);
      if (!(v > 0.0))
        throw DegenerateVarianceError(
            "oracle weights need strictly positive error variance");
      sd[j] = std::sqrt(v);
    }
    const MatrixXd r = sd.asDiagonal() * correlation_matrix(cfg.corr, sub.times) *
                       sd.asDiagonal();
    bool jittered = false;
    w.push_back(detail::pd_inverse(r, &jittered));
  }
  return w;
}

/// Runs the full two-stage pipeline over `cfg.reps` generated replications
/// and summarizes both estimators. Deterministic for fixed (config, options)
/// including under `threads > 1`: replication r always uses stream
/// (seed, r) and results are reduced in replication order.
inline StudyResult run_study(const SimConfig& cfg, const StudyOptions& opts) {
  cfg.check();
  if (!(opts.h > 0.0))
    throw ParameterRangeError("run_study: link bandwidth h must be positive");
  const int d = static_cast<int>(cfg.beta0.size());
  const int p = static_cast<int>(cfg.theta0.size());
  const int q = d + p;
  const int reps = cfg.reps;

  StudyResult res;
  res.truth.resize(q);
  res.truth.head(d) = cfg.beta0;
  res.truth.tail(p) = normalize_theta(cfg.theta0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  res.puls_estimates = MatrixXd::Constant(reps, q, nan);
  res.sgee_estimates = MatrixXd::Constant(reps, q, nan);
  res.puls_ok.assign(static_cast<std::size_t>(reps), 0);
  res.sgee_ok.assign(static_cast<std::size_t>(reps), 0);
  res.phi_estimates =
      MatrixXd::Constant(reps, std::max(1, phi_dimension(opts.fitted)), nan);
  res.variance_grid =
      VectorXd::LinSpaced(opts.variance_grid_points, 0.0, static_cast<double>(cfg.T));
  res.sigma2_values = MatrixXd::Constant(reps, opts.variance_grid_points, nan);
  std::vector<std::string> failures(static_cast<std::size_t>(reps));

  parallel_for(static_cast<std::size_t>(reps), opts.threads, [&](std::size_t r) {
    try {
      const LongitudinalDataset ds = generate_dataset(cfg, r);
      FitOptions fo;
      fo.method = opts.run_sgee ? Method::Sgee : Method::Puls;
      fo.h = opts.h;
      fo.h1 = opts.h1;
      fo.corr = opts.fitted;
      fo.iterate = opts.iterate;
      fo.spec = opts.spec;
      fo.puls = opts.puls;
      fo.sgee = opts.sgee;
      fo.phi = opts.phi;
      std::vector<MatrixXd> oracle;
      switch (opts.weights) {
        case StudyWeights::Estimated:
          fo.weights = WeightPolicy::Estimated;
          break;
        case StudyWeights::Identity:
          fo.weights = WeightPolicy::Identity;
          break;
        case StudyWeights::Oracle:
          oracle = oracle_weight_blocks(cfg, ds);
          fo.weights = WeightPolicy::Supplied;
          fo.supplied_weights = &oracle;
          break;
      }
      const FullFit ff = fit_full(ds, fo);
      if (ff.puls.converged) {
        res.puls_ok[r] = 1;
        res.puls_estimates.row(r).head(d) = ff.puls.params.beta.transpose();
        res.puls_estimates.row(r).tail(p) = ff.puls.params.theta.transpose();
      } else {
        failures[r] = "puls: did not converge";
      }
      if (opts.run_sgee && ff.sgee_attempted && ff.sgee.converged) {
        res.sgee_ok[r] = 1;
        res.sgee_estimates.row(r).head(d) = ff.sgee.params.beta.transpose();
        res.sgee_estimates.row(r).tail(p) = ff.sgee.params.theta.transpose();
      } else if (opts.run_sgee && failures[r].empty()) {
        failures[r] = ff.note.empty() ? "sgee: did not converge" : ff.note;
      }
      if (ff.have_covariance) {
        if (ff.phi.family.phi.size() > 0)
          res.phi_estimates.row(r).head(ff.phi.family.phi.size()) =
              ff.phi.family.phi.transpose();
        for (Eigen::Index k = 0; k < res.variance_grid.size(); ++k)
          res.sigma2_values(r, k) = variance_at(ff.vfe, res.variance_grid[k]);
      }
    } catch (const std::exception& ex) {
      failures[r] = ex.what();
    }
  });

  MatrixXd puls_done(reps, q), sgee_done(reps, q);
  int np = 0, ns = 0;
  for (int r = 0; r < reps; ++r) {
    if (res.puls_ok[r]) puls_done.row(np++) = res.puls_estimates.row(r);
    if (opts.run_sgee && res.sgee_ok[r]) sgee_done.row(ns++) = res.sgee_estimates.row(r);
    if (res.first_failure.empty() && !failures[r].empty())
      res.first_failure = "rep " + std::to_string(r) + ": " + failures[r];
  }
  res.puls_failures = reps - np;
  res.sgee_failures = opts.run_sgee ? reps - ns : 0;

  const auto check_failures = [&](int failed, const char* which) {
    if (static_cast<double>(failed) >
        opts.max_failure_fraction * static_cast<double>(reps))
      throw ConvergenceError(
          "run_study: " + std::to_string(failed) + "/" + std::to_string(reps) +
          " replications failed for " + which +
          (res.first_failure.empty() ? std::string()
                                     : "; first failure: " + res.first_failure));
  };
  check_failures(res.puls_failures, "puls");
  if (opts.run_sgee) check_failures(res.sgee_failures, "sgee");

  res.puls = summarize(puls_done.topRows(np), res.truth);
  res.puls.n_excluded = res.puls_failures;
  if (opts.run_sgee) {
    res.sgee = summarize(sgee_done.topRows(ns), res.truth);
    res.sgee.n_excluded = res.sgee_failures;
  }
  return res;
}

}  // namespace spgee
