#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/inference.hpp"
#include "spgee/kernel.hpp"
#include "spgee/nelder_mead.hpp"
#include "spgee/profile.hpp"
#include "spgee/puls.hpp"

namespace spgee {

// ---------------------------------------------------------------------------
// Correlation families
// ---------------------------------------------------------------------------

enum class CorrelationKind { Independence, Ar1, Arma11 };

/// Parametric within-subject correlation: Independence (no parameters),
/// AR(1) with phi = (rho), or ARMA(1,1) with phi = (gamma, rho) giving
/// off-diagonal entries gamma * rho^|t_j - t_k|.
struct CorrelationFamily {
  CorrelationKind kind = CorrelationKind::Independence;
  VectorXd phi;

  static CorrelationFamily independence() { return {}; }
  static CorrelationFamily ar1(double rho) {
    CorrelationFamily f;
    f.kind = CorrelationKind::Ar1;
    f.phi = VectorXd::Constant(1, rho);
    return f;
  }
  static CorrelationFamily arma11(double gamma, double rho) {
    CorrelationFamily f;
    f.kind = CorrelationKind::Arma11;
    f.phi.resize(2);
    f.phi << gamma, rho;
    return f;
  }
};

inline int phi_dimension(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::Independence: return 0;
    case CorrelationKind::Ar1: return 1;
    case CorrelationKind::Arma11: return 2;
  }
  return 0;
}

inline std::string correlation_name(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::Independence: return "indep";
    case CorrelationKind::Ar1: return "ar1";
    case CorrelationKind::Arma11: return "arma11";
  }
  return "indep";
}

inline void check_admissible(const CorrelationFamily& family) {
  if (family.phi.size() != phi_dimension(family.kind))
    throw ParameterRangeError("correlation family " +
                              correlation_name(family.kind) + " expects " +
                              std::to_string(phi_dimension(family.kind)) +
                              " parameter(s), got " +
                              std::to_string(family.phi.size()));
  switch (family.kind) {
    case CorrelationKind::Independence:
      break;
    case CorrelationKind::Ar1: {
      const double rho = family.phi[0];
      if (!std::isfinite(rho) || std::abs(rho) >= 1.0)
        throw ParameterRangeError("ar1 requires |rho| < 1, got rho=" +
                                  std::to_string(rho));
      break;
    }
    case CorrelationKind::Arma11: {
      const double gamma = family.phi[0];
      const double rho = family.phi[1];
      if (!std::isfinite(gamma) || gamma <= 0.0 || gamma > 1.0)
        throw ParameterRangeError("arma11 requires gamma in (0,1], got gamma=" +
                                  std::to_string(gamma));
      if (!std::isfinite(rho) || std::abs(rho) >= 1.0)
        throw ParameterRangeError("arma11 requires |rho| < 1, got rho=" +
                                  std::to_string(rho));
      break;
    }
  }
}

namespace detail {

/// Serial correlation at a nonnegative real lag. For rho >= 0 this is
/// rho^lag. Negative rho is extended off integer lags by
/// |rho|^lag * cos(pi * lag) — the real part of the complex power — which
/// matches (-rho -> (-1)^k rho^k) at integer lags and stays a valid
/// (positive semi-definite) stationary correlation, being the product of a
/// Gaussian-decay-free exponential kernel and a cosine kernel.
inline double serial_correlation(double rho, double lag) {
  if (rho == 0.0) return lag == 0.0 ? 1.0 : 0.0;
  if (rho > 0.0) return std::pow(rho, lag);
  return std::pow(-rho, lag) * std::cos(kPi * lag);
}

inline constexpr double kPdJitterRel = 1e-10;

}  // namespace detail

/// Correlation matrix with unit diagonal and entries gamma * rho^|t_j - t_k|
/// (AR(1): gamma = 1; Independence: identity).
inline MatrixXd correlation_matrix(const CorrelationFamily& family,
                                   const VectorXd& times) {
  check_admissible(family);
  const Eigen::Index m = times.size();
  MatrixXd c = MatrixXd::Identity(m, m);
  if (family.kind == CorrelationKind::Independence) return c;
  const double gamma =
      family.kind == CorrelationKind::Arma11 ? family.phi[0] : 1.0;
  const double rho = family.phi[family.kind == CorrelationKind::Arma11 ? 1 : 0];
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index k = j + 1; k < m; ++k) {
      const double lag = std::abs(times[j] - times[k]);
      c(j, k) = c(k, j) = gamma * detail::serial_correlation(rho, lag);
    }
  return c;
}

// ---------------------------------------------------------------------------
// Variance function
// ---------------------------------------------------------------------------

/// Robust log-transform variance estimate: sigma2_diamond holds the local
/// linear smooth of log(r_hat + zeta_n) against time on a uniform grid
/// (linear interpolation between points), and the final variance is
///   sigma2(t) = exp(sigma2_diamond(t)) / tau_hat   — strictly positive.
struct VarianceFunctionEstimate {
  VectorXd grid;            ///< uniform time grid
  VectorXd sigma2_diamond;  ///< smoothed log-scale values on the grid
  double tau_hat = 1.0;
  double h1 = 0.0;
  double zeta_n = 0.0;

  /// Piecewise-linear evaluation; outside the grid the nearest boundary fit
  /// is used and `clamped` (when supplied) is set.
  double diamond_at(double t, bool* clamped = nullptr) const {
    if (grid.size() == 0) throw Error("variance function has an empty grid");
    if (grid.size() == 1) return sigma2_diamond[0];
    if (t <= grid[0]) {
      if (clamped && t < grid[0]) *clamped = true;
      return sigma2_diamond[0];
    }
    const Eigen::Index last = grid.size() - 1;
    if (t >= grid[last]) {
      if (clamped && t > grid[last]) *clamped = true;
      return sigma2_diamond[last];
    }
    const double step = (grid[last] - grid[0]) / static_cast<double>(last);
    auto k = static_cast<Eigen::Index>((t - grid[0]) / step);
    k = std::min(k, last - 1);
    const double frac = (t - grid[k]) / (grid[k + 1] - grid[k]);
    return (1.0 - frac) * sigma2_diamond[k] + frac * sigma2_diamond[k + 1];
  }
};

/// Squared residuals r_hat_ij at the converged profile least-squares fit.
inline std::vector<VectorXd> residual_squares(
    const LongitudinalDataset& ds, const PulsFit& puls, double h,
    const KernelSpec& spec = KernelSpec::epanechnikov()) {
  if (!puls.converged)
    throw Error("residual_squares: profile least-squares fit did not converge");
  std::vector<VectorXd> r = fitted_residuals(ds, puls.params, h, spec);
  for (auto& ri : r) ri = ri.array().square();
  return r;
}

/// Smooths log(r_hat + zeta_n) against observation time with weights
/// 1/(n m_i) and stores the intercepts on a `grid_points`-point uniform grid
/// over the observed time range. tau_hat is left at 1 for `estimate_tau`.
inline VarianceFunctionEstimate fit_log_variance(
    const LongitudinalDataset& ds, const std::vector<VectorXd>& r_hat, double h1,
    const KernelSpec& spec = KernelSpec::epanechnikov(),
    Eigen::Index grid_points = 401) {
  if (h1 <= 0.0) throw ParameterRangeError("fit_log_variance: h1 must be > 0");
  if (r_hat.size() != ds.n_subjects())
    throw DimensionError("fit_log_variance: residual blocks do not match subjects");
  const Eigen::Index total = ds.total_obs();
  const double zeta = 1.0 / static_cast<double>(total);

  VectorXd t(total), w(total);
  MatrixXd target(total, 1);
  const double n = static_cast<double>(ds.n_subjects());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    const auto& sub = ds.subject(i);
    if (r_hat[i].size() != sub.size())
      throw DimensionError("fit_log_variance: residual block size mismatch at subject " +
                           sub.id);
    const double wi = 1.0 / (n * static_cast<double>(sub.size()));
    for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) {
      if (!(r_hat[i][j] >= 0.0))
        throw Error("fit_log_variance: negative squared residual at subject " +
                    sub.id);
      t[r] = sub.times[j];
      w[r] = wi;
      target(r, 0) = std::log(r_hat[i][j] + zeta);
    }
  }

  VarianceFunctionEstimate vfe;
  vfe.h1 = h1;
  vfe.zeta_n = zeta;
  const auto [lo, hi] = ds.time_domain();
  vfe.grid = VectorXd::LinSpaced(grid_points, lo, hi);
  vfe.sigma2_diamond.resize(grid_points);
  LocalLinearSmoother sm(t, target, w, spec);
  for (Eigen::Index k = 0; k < grid_points; ++k)
    vfe.sigma2_diamond[k] = sm.fit(vfe.grid[k], h1).a[0];
  return vfe;
}

/// Scale correction for the log-transform smoother:
///   tau_hat = [ (1/T_n) sum_ij r_hat_ij exp(-sigma2_diamond(t_ij)) ]^{-1}.
inline double estimate_tau(const LongitudinalDataset& ds,
                           const std::vector<VectorXd>& r_hat,
                           const VarianceFunctionEstimate& vfe) {
  if (r_hat.size() != ds.n_subjects())
    throw DimensionError("estimate_tau: residual blocks do not match subjects");
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    const auto& sub = ds.subject(i);
    for (Eigen::Index j = 0; j < sub.size(); ++j)
      acc += r_hat[i][j] * std::exp(-vfe.diamond_at(sub.times[j]));
  }
  acc /= static_cast<double>(ds.total_obs());
  if (!(acc > 0.0) || !std::isfinite(acc))
    throw DegenerateVarianceError(
        "estimate_tau: mean rescaled squared residual is " + std::to_string(acc) +
        "; variance scale is unidentified (all residuals zero?)");
  return 1.0 / acc;
}

/// sigma2(t) = exp(sigma2_diamond(t)) / tau_hat; `clamped` reports boundary
/// extrapolation.
inline double variance_at(const VarianceFunctionEstimate& vfe, double t,
                          bool* clamped = nullptr) {
  return std::exp(vfe.diamond_at(t, clamped)) / vfe.tau_hat;
}

/// Convenience wrapper: smooth the log squared residuals, then calibrate
/// tau_hat.
inline VarianceFunctionEstimate estimate_variance_function(
    const LongitudinalDataset& ds, const std::vector<VectorXd>& r_hat, double h1,
    const KernelSpec& spec = KernelSpec::epanechnikov(),
    Eigen::Index grid_points = 401) {
  VarianceFunctionEstimate vfe = fit_log_variance(ds, r_hat, h1, spec, grid_points);
  vfe.tau_hat = estimate_tau(ds, r_hat, vfe);
  return vfe;
}

// ---------------------------------------------------------------------------
// Working covariance blocks
// ---------------------------------------------------------------------------

/// Per-subject working blocks R_i = Sigma_i^{1/2} C_i(phi) Sigma_i^{1/2} and
/// W_i = R_i^{-1}.
struct WorkingCovariance {
  VectorXd sigma2;  ///< variance diagonal sigma2(t_ij)
  MatrixXd r;
  MatrixXd w;
  bool jittered = false;  ///< diagonal inflation was needed for the inverse
};

namespace detail {

/// Inverts a symmetric PD matrix by Cholesky, inflating the diagonal by
/// kPdJitterRel * trace on failure.
inline MatrixXd pd_inverse(const MatrixXd& r, bool* jittered) {
  const Eigen::Index m = r.rows();
  MatrixXd work = r;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() == Eigen::Success)
      return llt.solve(MatrixXd::Identity(m, m));
    if (jittered) *jittered = true;
    double bump = kPdJitterRel * work.trace();
    if (!(bump > 0.0)) bump = kPdJitterRel;
    work.diagonal().array() += bump * std::pow(10.0, attempt);
  }
  throw DegenerateVarianceError(
      "working covariance block is not positive definite even after jitter");
}

}  // namespace detail

inline std::vector<WorkingCovariance> working_covariance(
    const VarianceFunctionEstimate& vfe, const CorrelationFamily& family,
    const LongitudinalDataset& ds) {
  check_admissible(family);
  std::vector<WorkingCovariance> out;
  out.reserve(ds.n_subjects());
  for (const auto& sub : ds.subjects()) {
    WorkingCovariance wc;
    wc.sigma2.resize(sub.size());
    for (Eigen::Index j = 0; j < sub.size(); ++j) {
      wc.sigma2[j] = variance_at(vfe, sub.times[j]);
      if (!(wc.sigma2[j] > 0.0) || !std::isfinite(wc.sigma2[j]))
        throw DegenerateVarianceError("nonpositive variance estimate at t=" +
                                      std::to_string(sub.times[j]));
    }
    const VectorXd sd = wc.sigma2.cwiseSqrt();
    wc.r = sd.asDiagonal() * correlation_matrix(family, sub.times) *
           sd.asDiagonal();
    wc.w = detail::pd_inverse(wc.r, &wc.jittered);
    out.push_back(std::move(wc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimum generalized variance selection of phi
// ---------------------------------------------------------------------------

struct PhiSelection {
  CorrelationFamily family;
  double objective = 0.0;  ///< pseudo-determinant of the sandwich at phi_hat
  bool clamped = false;    ///< refinement left the admissible region
};

struct PhiSearchOptions {
  bool refine = true;            ///< Nelder--Mead polish from the best grid point
  NelderMeadOptions refine_opts{.max_iters = 200, .param_tol = 1e-6,
                                .objective_tol = 1e-12, .init_step = 0.02,
                                .restarts = 0};
};

namespace detail {

/// Keeps rho strictly inside (-1,1) and gamma inside (0,1].
inline double clamp_rho(double rho, bool* clamped) {
  const double limit = 0.9999;
  if (std::abs(rho) <= limit) return rho;
  if (clamped) *clamped = true;
  return rho > 0.0 ? limit : -limit;
}

inline double clamp_gamma(double gamma, bool* clamped) {
  const double floor = 1e-4;
  if (gamma >= floor && gamma <= 1.0) return gamma;
  if (clamped) *clamped = true;
  return std::clamp(gamma, floor, 1.0);
}

inline CorrelationFamily family_from_free(CorrelationKind kind,
                                          const VectorXd& free_phi,
                                          bool* clamped) {
  switch (kind) {
    case CorrelationKind::Independence:
      return CorrelationFamily::independence();
    case CorrelationKind::Ar1:
      return CorrelationFamily::ar1(clamp_rho(free_phi[0], clamped));
    case CorrelationKind::Arma11:
      return CorrelationFamily::arma11(clamp_gamma(free_phi[0], clamped),
                                       clamp_rho(free_phi[1], clamped));
  }
  return CorrelationFamily::independence();
}

}  // namespace detail

/// Generalized-variance objective for a candidate phi: the pseudo-determinant
/// of [Omega0*]^+ Omega1* [Omega0*]^+ assembled from the profile
/// least-squares residuals and the Lambda blocks held fixed at that fit.
inline double phi_objective(const LongitudinalDataset& ds,
                            const std::vector<VectorXd>& residuals,
                            const std::vector<MatrixXd>& lambda,
                            const std::vector<VectorXd>& sigma2,
                            const CorrelationFamily& family) {
  const Eigen::Index q = lambda.front().cols();
  MatrixXd omega0 = MatrixXd::Zero(q, q);
  MatrixXd omega1 = MatrixXd::Zero(q, q);
  const auto order = canonical_subject_order(ds);
  for (const std::size_t i : order) {
    const auto& sub = ds.subject(i);
    const VectorXd sd = sigma2[i].cwiseSqrt();
    MatrixXd r = sd.asDiagonal() * correlation_matrix(family, sub.times) *
                 sd.asDiagonal();
    bool jittered = false;
    const MatrixXd w = detail::pd_inverse(r, &jittered);
    const MatrixXd wl = w * lambda[i];
    omega0.noalias() += lambda[i].transpose() * wl;
    const VectorXd g = wl.transpose() * residuals[i];
    omega1.noalias() += g * g.transpose();
  }
  const MatrixXd pinv = detail::pseudo_inverse(omega0);
  return detail::pseudo_determinant(pinv * omega1 * pinv);
}

/// Minimum generalized variance: coarse grid over the admissible region
/// followed by simplex refinement from the best grid point (clamped back to
/// the region if the polish steps outside).
inline PhiSelection select_phi(const LongitudinalDataset& ds,
                               const std::vector<VectorXd>& residuals,
                               const std::vector<MatrixXd>& lambda,
                               const std::vector<VectorXd>& sigma2,
                               CorrelationKind kind,
                               const PhiSearchOptions& opts = {}) {
  if (residuals.size() != ds.n_subjects() || lambda.size() != ds.n_subjects() ||
      sigma2.size() != ds.n_subjects())
    throw DimensionError("select_phi: per-subject inputs do not match dataset");
  double ss = 0.0;
  for (const auto& e : residuals) ss += e.squaredNorm();
  if (!(ss > 0.0))
    throw DegenerateVarianceError(
        "select_phi: all residuals are zero; the generalized variance "
        "objective is identically degenerate");

  PhiSelection best;
  best.family = CorrelationFamily::independence();
  if (kind == CorrelationKind::Independence) {
    best.objective = phi_objective(ds, residuals, lambda, sigma2, best.family);
    return best;
  }

  std::vector<CorrelationFamily> candidates;
  if (kind == CorrelationKind::Ar1) {
    for (int k = -19; k <= 19; ++k)
      candidates.push_back(CorrelationFamily::ar1(0.05 * k));
  } else {
    for (int g = 1; g <= 20; ++g)
      for (int k = -19; k <= 19; ++k)
        candidates.push_back(CorrelationFamily::arma11(0.05 * g, 0.05 * k));
  }
  best.objective = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    const double val = phi_objective(ds, residuals, lambda, sigma2, cand);
    if (val < best.objective) {
      best.objective = val;
      best.family = cand;
    }
  }

  if (opts.refine) {
    auto objective = [&](const VectorXd& free_phi) {
      bool clamped = false;
      const CorrelationFamily f =
          detail::family_from_free(kind, free_phi, &clamped);
      return phi_objective(ds, residuals, lambda, sigma2, f);
    };
    const NelderMeadResult nm =
        nelder_mead(objective, best.family.phi, opts.refine_opts);
    if (nm.value < best.objective) {
      best.objective = nm.value;
      best.family = detail::family_from_free(kind, nm.x, &best.clamped);
    }
  }
  return best;
}

}  // namespace spgee
