#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/kernel.hpp"
#include "spgee/nelder_mead.hpp"
#include "spgee/profile.hpp"

namespace spgee {

/// Result of the profile least-squares stage.
struct PulsFit {
  ModelParameters params;   ///< theta normalized, first component positive
  double objective = 0.0;   ///< weighted profile sum of squares at the optimum
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Large value returned when a candidate direction leaves some index point
/// without local data (or the direction itself degenerates); scaled by the
/// subject count so it dominates any attainable sum of squares.
inline double puls_penalty(const LongitudinalDataset& ds) {
  return 1e12 * static_cast<double>(ds.n_subjects());
}

}  // namespace detail

/// Weighted profile sum of squares
///   Q(beta, theta) = sum_i (1/(n m_i)) sum_j (Y_ij - Z_ij^T beta - eta_hat)^2
/// where eta_hat is the profile local linear link estimate evaluated at
/// X_ij^T theta. Accumulated over a content-determined observation order so
/// the value is independent of how subjects were listed.
inline double puls_objective(const LongitudinalDataset& ds,
                             const ModelParameters& params, double h,
                             const KernelSpec& spec = KernelSpec::epanechnikov()) {
  if (params.beta.size() != ds.d() || params.theta.size() != ds.p())
    throw DimensionError("puls_objective: parameter dimensions do not match data");
  if (params.theta.norm() <= kThetaZeroTol) return detail::puls_penalty(ds);
  const VectorXd theta = normalize_theta(params.theta);

  std::unique_ptr<ProfileSmooth> ps;
  try {
    ps = std::make_unique<ProfileSmooth>(ds, theta, h, spec, false);
  } catch (const InsufficientLocalDataError&) {
    return detail::puls_penalty(ds);
  }

  const auto order = canonical_observation_order(ds);
  const double n = static_cast<double>(ds.n_subjects());
  double q = 0.0;
  for (const auto& [i, j] : order) {
    const auto& sub = ds.subject(i);
    const Eigen::Index r = ps->row(i, j);
    const double resid =
        sub.y[j] - sub.z.row(j).dot(params.beta) - ps->eta_hat(r, params.beta);
    q += resid * resid / (n * static_cast<double>(sub.size()));
  }
  return q;
}

/// Pooled ordinary least squares of Y on [1, Z, X]; the Z coefficients start
/// beta and the normalized X coefficients start theta. Falls back to the
/// first coordinate direction when the X block carries no signal.
inline ModelParameters default_init(const LongitudinalDataset& ds) {
  const Eigen::Index total = ds.total_obs();
  const int d = ds.d();
  const int p = ds.p();
  MatrixXd a(total, 1 + d + p);
  VectorXd y(total);
  const auto order = canonical_observation_order(ds);
  Eigen::Index r = 0;
  for (const auto& [i, j] : order) {
    const auto& sub = ds.subject(i);
    a(r, 0) = 1.0;
    a.block(r, 1, 1, d) = sub.z.row(j);
    a.block(r, 1 + d, 1, p) = sub.x.row(j);
    y[r] = sub.y[j];
    ++r;
  }
  const VectorXd coef = a.colPivHouseholderQr().solve(y);
  ModelParameters init;
  init.beta = coef.segment(1, d);
  VectorXd tx = coef.segment(1 + d, p);
  try {
    init.theta = normalize_theta(tx);
  } catch (const DegenerateDirectionError&) {
    init.theta = VectorXd::Zero(p);
    init.theta[0] = 1.0;
  }
  return init;
}

struct PulsOptions {
  NelderMeadOptions search;  ///< simplex settings for the joint minimization
};

/// Minimizes the profile sum of squares over (beta, theta) by Nelder--Mead,
/// renormalizing theta inside the objective so the search is unconstrained.
inline PulsFit fit_puls(const LongitudinalDataset& ds, double h,
                        const KernelSpec& spec = KernelSpec::epanechnikov(),
                        const PulsOptions& opts = {},
                        const ModelParameters* init = nullptr) {
  const auto report = validate(ds);
  if (!report.ok()) throw SchemaError("fit_puls: " + report.violations.front());
  const ModelParameters start = init ? *init : default_init(ds);
  if (start.beta.size() != ds.d() || start.theta.size() != ds.p())
    throw DimensionError("fit_puls: init dimensions do not match data");

  const int d = ds.d();
  const int p = ds.p();
  VectorXd x0(d + p);
  x0.head(d) = start.beta;
  x0.tail(p) = start.theta.norm() > kThetaZeroTol ? normalize_theta(start.theta)
                                                  : VectorXd::Unit(p, 0);

  ModelParameters trial;
  auto objective = [&](const VectorXd& x) {
    trial.beta = x.head(d);
    trial.theta = x.tail(p);
    return puls_objective(ds, trial, h, spec);
  };
  const NelderMeadResult nm = nelder_mead(objective, x0, opts.search);

  PulsFit fit;
  fit.params.beta = nm.x.head(d);
  fit.params.theta = normalize_theta(VectorXd(nm.x.tail(p)));
  fit.objective = nm.value;
  fit.iterations = nm.iterations;
  fit.converged = nm.converged && nm.value < detail::puls_penalty(ds);
  return fit;
}

}  // namespace spgee
