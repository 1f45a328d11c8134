#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/kernel.hpp"
#include "spgee/parallel.hpp"
#include "spgee/puls.hpp"

namespace spgee {

/// Cross-validation trace: one prediction-error score per candidate
/// bandwidth (+inf where the candidate was infeasible) and the winner.
struct CvResult {
  VectorXd grid;
  VectorXd scores;
  double best = 0.0;
};

struct CvOptions {
  PulsOptions puls;        ///< settings for each leave-one-out refit
  bool warm_start = true;  ///< start each refit from the full-data fit
  int threads = 1;
};

/// Rule-of-thumb grid: 12 geometric points spanning [0.25, 4] times
/// h0 = sd(pilot index) * T_n^{-1/5}, with the pilot direction taken from
/// the pooled-regression initializer.
inline VectorXd default_grid(const LongitudinalDataset& ds) {
  const VectorXd theta = default_init(ds).theta;
  const Eigen::Index total = ds.total_obs();
  VectorXd u(total);
  Eigen::Index r = 0;
  for (const auto& sub : ds.subjects())
    for (Eigen::Index j = 0; j < sub.size(); ++j, ++r)
      u[r] = sub.x.row(j).dot(theta);
  const double mean = u.mean();
  const double sd = std::sqrt((u.array() - mean).square().sum() /
                              static_cast<double>(total - 1));
  if (!(sd > 1e-12))
    throw DegenerateDesignError(
        "default_grid: pilot index has (near-)zero variance; no scale for a "
        "bandwidth rule of thumb");
  const double h0 = sd * std::pow(static_cast<double>(total), -0.2);
  VectorXd grid(12);
  for (int k = 0; k < 12; ++k)
    grid[k] = 0.25 * h0 * std::pow(16.0, static_cast<double>(k) / 11.0);
  return grid;
}

/// Rule-of-thumb grid for the variance bandwidth: the same geometric layout
/// as default_grid, scaled by the spread of observation times.
inline VectorXd default_time_grid(const LongitudinalDataset& ds) {
  const Eigen::Index total = ds.total_obs();
  VectorXd t(total);
  Eigen::Index r = 0;
  for (const auto& sub : ds.subjects())
    for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) t[r] = sub.times[j];
  const double mean = t.mean();
  const double sd = std::sqrt((t.array() - mean).square().sum() /
                              static_cast<double>(total - 1));
  if (!(sd > 1e-12))
    throw DegenerateDesignError(
        "default_time_grid: observation times have (near-)zero variance");
  const double h0 = sd * std::pow(static_cast<double>(total), -0.2);
  VectorXd grid(12);
  for (int k = 0; k < 12; ++k)
    grid[k] = 0.25 * h0 * std::pow(16.0, static_cast<double>(k) / 11.0);
  return grid;
}

namespace detail {

inline LongitudinalDataset drop_subject(const LongitudinalDataset& ds,
                                        std::size_t skip) {
  std::vector<SubjectBlock> keep;
  keep.reserve(ds.n_subjects() - 1);
  for (std::size_t i = 0; i < ds.n_subjects(); ++i)
    if (i != skip) keep.push_back(ds.subject(i));
  return LongitudinalDataset(std::move(keep), ds.d(), ds.p());
}

/// Weighted squared prediction error for one held-out subject under the
/// model fitted without it; +inf when its index points fall outside the
/// smoothable range.
inline double holdout_score(const LongitudinalDataset& full, std::size_t i,
                            double h, const KernelSpec& spec,
                            const CvOptions& opts,
                            const ModelParameters* warm) {
  const LongitudinalDataset rest = detail::drop_subject(full, i);
  const PulsFit fit = fit_puls(rest, h, spec, opts.puls, warm);
  const auto& sub = full.subject(i);
  VectorXd eval(sub.size());
  for (Eigen::Index j = 0; j < sub.size(); ++j)
    eval[j] = sub.x.row(j).dot(fit.params.theta);
  LinkEstimate link;
  try {
    link = profile_link(rest, fit.params, h, spec, eval);
  } catch (const InsufficientLocalDataError&) {
    return std::numeric_limits<double>::infinity();
  }
  double err = 0.0;
  for (Eigen::Index j = 0; j < sub.size(); ++j) {
    const double pred = sub.z.row(j).dot(fit.params.beta) + link.eta[j];
    err += (sub.y[j] - pred) * (sub.y[j] - pred);
  }
  if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
  return err / (static_cast<double>(full.n_subjects()) *
                static_cast<double>(sub.size()));
}

inline double pick_best(const VectorXd& grid, const VectorXd& scores) {
  double best = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    // Ties break toward the larger bandwidth (smoother fit).
    if (scores[k] < best_score ||
        (scores[k] == best_score && grid[k] > best)) {
      best_score = scores[k];
      best = grid[k];
    }
  }
  if (!std::isfinite(best_score))
    throw Error("cross-validation: every candidate bandwidth was infeasible");
  return best;
}

}  // namespace detail

/// Leave-one-subject-out cross-validation of the link bandwidth: each score
/// is the weighted squared error predicting the held-out subject from a
/// profile least-squares fit on the remaining subjects.
inline CvResult cv_link_bandwidth(const LongitudinalDataset& ds,
                                  const VectorXd& grid, const KernelSpec& spec,
                                  const CvOptions& opts = {}) {
  if (grid.size() == 0 || grid.minCoeff() <= 0.0)
    throw ParameterRangeError("cv_link_bandwidth: grid must be nonempty and positive");
  const std::size_t n = ds.n_subjects();
  const auto order = canonical_subject_order(ds);

  std::vector<ModelParameters> warm(grid.size());
  if (opts.warm_start) {
    for (Eigen::Index k = 0; k < grid.size(); ++k)
      warm[k] = fit_puls(ds, grid[k], spec, opts.puls).params;
  }

  MatrixXd cell(grid.size(), n);
  parallel_for(static_cast<std::size_t>(grid.size()) * n, opts.threads,
               [&](std::size_t task) {
                 const Eigen::Index k = static_cast<Eigen::Index>(task / n);
                 const std::size_t i = task % n;
                 cell(k, i) = detail::holdout_score(
                     ds, i, grid[k], spec, opts,
                     opts.warm_start ? &warm[k] : nullptr);
               });

  CvResult out;
  out.grid = grid;
  out.scores.resize(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    double s = 0.0;
    for (const std::size_t i : order) s += cell(k, i);
    out.scores[k] = s;
  }
  out.best = detail::pick_best(out.grid, out.scores);
  return out;
}

/// Leave-one-subject-out cross-validation of the variance bandwidth h1:
/// scores prediction of the held-out subject's log(r_hat + zeta_n) values by
/// the time smoother built from the remaining subjects. The squared
/// residuals come from one full-data profile least-squares fit; only the
/// variance smoother is cross-validated.
inline CvResult cv_variance_bandwidth(const LongitudinalDataset& ds,
                                      const std::vector<VectorXd>& r_hat,
                                      const VectorXd& grid,
                                      const KernelSpec& spec,
                                      const CvOptions& opts = {}) {
  if (grid.size() == 0 || grid.minCoeff() <= 0.0)
    throw ParameterRangeError("cv_variance_bandwidth: grid must be nonempty and positive");
  if (r_hat.size() != ds.n_subjects())
    throw DimensionError("cv_variance_bandwidth: residual blocks do not match subjects");
  const std::size_t n = ds.n_subjects();
  const double zeta = 1.0 / static_cast<double>(ds.total_obs());
  const auto order = canonical_subject_order(ds);

  MatrixXd cell(grid.size(), n);
  parallel_for(
      static_cast<std::size_t>(grid.size()) * n, opts.threads,
      [&](std::size_t task) {
        const Eigen::Index k = static_cast<Eigen::Index>(task / n);
        const std::size_t skip = task % n;
        Eigen::Index rest_total = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (i != skip) rest_total += ds.subject(i).size();
        VectorXd t(rest_total), w(rest_total);
        MatrixXd target(rest_total, 1);
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == skip) continue;
          const auto& sub = ds.subject(i);
          const double wi = 1.0 / (static_cast<double>(n) *
                                   static_cast<double>(sub.size()));
          for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) {
            t[r] = sub.times[j];
            w[r] = wi;
            target(r, 0) = std::log(r_hat[i][j] + zeta);
          }
        }
        LocalLinearSmoother sm(t, target, w, spec);
        const auto& held = ds.subject(skip);
        double err = 0.0;
        try {
          for (Eigen::Index j = 0; j < held.size(); ++j) {
            const double pred = sm.fit(held.times[j], grid[k]).a[0];
            const double obs = std::log(r_hat[skip][j] + zeta);
            err += (pred - obs) * (pred - obs);
          }
        } catch (const InsufficientLocalDataError&) {
          err = std::numeric_limits<double>::infinity();
        }
        cell(k, skip) =
            std::isfinite(err)
                ? err / (static_cast<double>(n) * static_cast<double>(held.size()))
                : std::numeric_limits<double>::infinity();
      });

  CvResult out;
  out.grid = grid;
  out.scores.resize(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    double s = 0.0;
    for (const std::size_t i : order) s += cell(k, i);
    out.scores[k] = s;
  }
  out.best = detail::pick_best(out.grid, out.scores);
  return out;
}

}  // namespace spgee
