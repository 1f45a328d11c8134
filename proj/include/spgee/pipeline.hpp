#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "spgee/covariance.hpp"
#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/kernel.hpp"
#include "spgee/puls.hpp"
#include "spgee/sgee.hpp"

namespace spgee {

enum class Method { Puls, Sgee };

/// How the estimating-equation weights W_i are obtained: identity blocks,
/// the estimated working covariance (variance smoothing + phi selection), or
/// externally supplied inverse-covariance blocks.
enum class WeightPolicy { Identity, Estimated, Supplied };

struct FitOptions {
  Method method = Method::Sgee;
  double h = 0.0;   ///< link bandwidth (required)
  double h1 = 0.0;  ///< variance bandwidth (required for estimated weights)
  CorrelationKind corr = CorrelationKind::Ar1;
  WeightPolicy weights = WeightPolicy::Estimated;
  const std::vector<MatrixXd>* supplied_weights = nullptr;
  int iterate = 1;  ///< rounds of covariance estimation + refit
  KernelSpec spec = KernelSpec::epanechnikov();
  PulsOptions puls;
  SgeeOptions sgee;
  PhiSearchOptions phi;
};

/// Everything the two-stage procedure produced. `sgee_attempted` is false
/// when the method stopped at the profile least-squares stage (requested, or
/// forced by its non-convergence).
struct FullFit {
  PulsFit puls;
  bool sgee_attempted = false;
  SgeeFit sgee;
  bool have_covariance = false;
  VarianceFunctionEstimate vfe;
  PhiSelection phi;
  std::string note;

  bool converged() const {
    if (!puls.converged) return false;
    return !sgee_attempted || sgee.converged;
  }
};

namespace detail {

inline std::vector<MatrixXd> identity_weights(const LongitudinalDataset& ds) {
  std::vector<MatrixXd> w;
  w.reserve(ds.n_subjects());
  for (const auto& sub : ds.subjects())
    w.push_back(MatrixXd::Identity(sub.size(), sub.size()));
  return w;
}

inline std::vector<VectorXd> variance_diagonals(const LongitudinalDataset& ds,
                                                const VarianceFunctionEstimate& vfe) {
  std::vector<VectorXd> out;
  out.reserve(ds.n_subjects());
  for (const auto& sub : ds.subjects()) {
    VectorXd s(sub.size());
    for (Eigen::Index j = 0; j < sub.size(); ++j)
      s[j] = variance_at(vfe, sub.times[j]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Two-stage procedure: profile least squares, then (unless stopped early)
/// working-covariance estimation and the weighted estimating equations, with
/// sandwich standard errors. `--iterate k` style refinement re-estimates the
/// covariance from the current fit and re-solves, k rounds in total.
inline FullFit fit_full(const LongitudinalDataset& ds, const FitOptions& opts) {
  if (!(opts.h > 0.0))
    throw ParameterRangeError("fit_full: link bandwidth h must be positive");
  if (opts.iterate < 1)
    throw ParameterRangeError("fit_full: iterate must be >= 1");

  FullFit out;
  out.puls = fit_puls(ds, opts.h, opts.spec, opts.puls);
  if (opts.method == Method::Puls) return out;
  if (!out.puls.converged) {
    out.note = "profile least-squares stage did not converge; estimating "
               "equations not attempted";
    return out;
  }
  if (opts.weights == WeightPolicy::Estimated && !(opts.h1 > 0.0))
    throw ParameterRangeError(
        "fit_full: variance bandwidth h1 must be positive for estimated weights");
  if (opts.weights == WeightPolicy::Supplied && !opts.supplied_weights)
    throw ConfigError("fit_full: supplied weight policy needs weight blocks");

  ModelParameters current = out.puls.params;
  for (int round = 0; round < opts.iterate; ++round) {
    std::vector<MatrixXd> w;
    switch (opts.weights) {
      case WeightPolicy::Identity:
        w = detail::identity_weights(ds);
        break;
      case WeightPolicy::Supplied:
        w = *opts.supplied_weights;
        break;
      case WeightPolicy::Estimated: {
        const std::vector<VectorXd> resid =
            fitted_residuals(ds, current, opts.h, opts.spec);
        std::vector<VectorXd> r2 = resid;
        for (auto& b : r2) b = b.array().square();
        out.vfe = estimate_variance_function(ds, r2, opts.h1, opts.spec);
        const std::vector<MatrixXd> lambda =
            build_lambda(ds, current, opts.h, opts.spec);
        const std::vector<VectorXd> sigma2 = detail::variance_diagonals(ds, out.vfe);
        out.phi = select_phi(ds, resid, lambda, sigma2, opts.corr, opts.phi);
        out.have_covariance = true;
        const std::vector<WorkingCovariance> blocks =
            working_covariance(out.vfe, out.phi.family, ds);
        w.reserve(blocks.size());
        for (const auto& b : blocks) w.push_back(b.w);
        break;
      }
    }
    out.sgee = fit_sgee(ds, opts.h, opts.spec, w, current, opts.sgee);
    out.sgee_attempted = true;
    if (!out.sgee.converged) {
      out.note = "estimating-equation solve did not converge (round " +
                 std::to_string(round + 1) + ")";
      break;
    }
    current = out.sgee.params;
    if (opts.weights != WeightPolicy::Estimated) break;  // later rounds identical
  }
  return out;
}

}  // namespace spgee
