#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/dogleg.hpp"
#include "spgee/error.hpp"
#include "spgee/inference.hpp"
#include "spgee/kernel.hpp"
#include "spgee/profile.hpp"
#include "spgee/puls.hpp"

namespace spgee {

/// Per-subject design blocks of the estimating equations: columns 1..d are
/// Z_ij - rho_Z(u_ij), columns d+1..d+p are eta_dot(u_ij) (X_ij - rho_X(u_ij)),
/// with all three plug-ins taken from the profile local linear smooths at the
/// index u_ij = X_ij^T theta.
inline std::vector<MatrixXd> build_lambda(const LongitudinalDataset& ds,
                                          const ModelParameters& params,
                                          double h, const KernelSpec& spec) {
  const int d = ds.d();
  const int p = ds.p();
  ProfileSmooth ps(ds, params.theta, h, spec, true);
  std::vector<MatrixXd> out;
  out.reserve(ds.n_subjects());
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    const auto& sub = ds.subject(i);
    MatrixXd lam(sub.size(), d + p);
    for (Eigen::Index j = 0; j < sub.size(); ++j) {
      const Eigen::Index r = ps.row(i, j);
      lam.block(j, 0, 1, d) = sub.z.row(j) - ps.rho_z(r);
      lam.block(j, d, 1, p) =
          ps.eta_dot_hat(r, params.beta) * (sub.x.row(j) - ps.rho_x(r));
    }
    out.push_back(std::move(lam));
  }
  return out;
}

/// The estimating function and its per-subject pieces, with the profile
/// smooths cached per index direction so that finite-difference sweeps over
/// beta reuse one smoothing pass. Not safe for concurrent use from multiple
/// threads; give each thread its own instance.
class GeeSystem {
public:
  GeeSystem(const LongitudinalDataset& ds, std::vector<MatrixXd> weights,
            double h, const KernelSpec& spec)
      : ds_(ds), weights_(std::move(weights)), h_(h), spec_(spec),
        order_(canonical_subject_order(ds)) {
    if (weights_.size() != ds.n_subjects())
      throw DimensionError("GeeSystem: weight block count does not match subjects");
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const auto& sub = ds.subject(i);
      if (weights_[i].rows() != sub.size() || weights_[i].cols() != sub.size())
        throw DimensionError("GeeSystem: weight block shape mismatch at subject " +
                             sub.id);
    }
  }

  /// G(beta, theta) = sum_i Lambda_i^T W_i (Y_i - Z_i beta - eta_hat_i),
  /// accumulated over a content-determined subject order. theta enters raw
  /// (unnormalized); the index is X^T theta as given.
  VectorXd operator()(const VectorXd& x) const {
    const int d = ds_.d();
    const int p = ds_.p();
    if (x.size() != d + p)
      throw DimensionError("GeeSystem: expected parameter vector of length " +
                           std::to_string(d + p));
    const VectorXd beta = x.head(d);
    const VectorXd theta = x.tail(p);
    const ProfileSmooth& ps = cached_smooth(theta);

    VectorXd g = VectorXd::Zero(d + p);
    MatrixXd lam;
    VectorXd resid;
    for (const std::size_t i : order_) {
      const auto& sub = ds_.subject(i);
      lam.resize(sub.size(), d + p);
      resid.resize(sub.size());
      for (Eigen::Index j = 0; j < sub.size(); ++j) {
        const Eigen::Index r = ps.row(i, j);
        lam.block(j, 0, 1, d) = sub.z.row(j) - ps.rho_z(r);
        lam.block(j, d, 1, p) =
            ps.eta_dot_hat(r, beta) * (sub.x.row(j) - ps.rho_x(r));
        resid[j] = sub.y[j] - sub.z.row(j).dot(beta) - ps.eta_hat(r, beta);
      }
      g.noalias() += lam.transpose() * (weights_[i] * resid);
    }
    return g;
  }

private:
  const ProfileSmooth& cached_smooth(const VectorXd& theta) const {
    if (!smooth_ || cached_theta_.size() != theta.size() ||
        (cached_theta_.array() != theta.array()).any()) {
      smooth_ = std::make_unique<ProfileSmooth>(ds_, theta, h_, spec_, true);
      cached_theta_ = theta;
    }
    return *smooth_;
  }

  const LongitudinalDataset& ds_;
  std::vector<MatrixXd> weights_;
  double h_;
  KernelSpec spec_;
  std::vector<std::size_t> order_;
  mutable VectorXd cached_theta_;
  mutable std::unique_ptr<ProfileSmooth> smooth_;
};

/// One evaluation of the estimating function at (beta, theta).
inline VectorXd gee_residual(const LongitudinalDataset& ds,
                             const ModelParameters& params,
                             const std::vector<MatrixXd>& weights, double h,
                             const KernelSpec& spec) {
  GeeSystem sys(ds, weights, h, spec);
  VectorXd x(ds.d() + ds.p());
  x.head(ds.d()) = params.beta;
  x.tail(ds.p()) = params.theta;
  return sys(x);
}

/// Link function estimate at the fitted parameters on an explicit grid.
inline LinkEstimate estimate_link(const LongitudinalDataset& ds,
                                  const ModelParameters& params, double h,
                                  const KernelSpec& spec,
                                  const VectorXd& grid) {
  return profile_link(ds, params, h, spec, grid);
}

/// Uniform grid spanning the observed index range at the given direction.
inline VectorXd index_grid(const LongitudinalDataset& ds, const VectorXd& theta,
                           Eigen::Index points) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& sub : ds.subjects())
    for (Eigen::Index j = 0; j < sub.size(); ++j) {
      const double u = sub.x.row(j).dot(theta);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
  return VectorXd::LinSpaced(points, lo, hi);
}

struct SgeeOptions {
  DoglegOptions solve;
  Eigen::Index link_grid_points = 201;
  bool compute_inference = true;
};

struct SgeeFit {
  ModelParameters params;  ///< theta normalized to the unit sphere
  VectorXd theta_raw;      ///< index coefficients as solved, before normalization
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  LinkEstimate link;
  VectorXd std_errors;
  SandwichEstimate inference;
};

/// Solves the weighted estimating equations for (beta, theta) from the given
/// start (theta normalized before entering), normalizes the index direction,
/// re-estimates the link at the solution, and attaches sandwich standard
/// errors.
inline SgeeFit fit_sgee(const LongitudinalDataset& ds, double h,
                        const KernelSpec& spec,
                        const std::vector<MatrixXd>& weights,
                        const ModelParameters& init,
                        const SgeeOptions& opts = {}) {
  const int d = ds.d();
  const int p = ds.p();
  if (init.beta.size() != d || init.theta.size() != p)
    throw DimensionError("fit_sgee: init dimensions do not match data");

  VectorXd x0(d + p);
  x0.head(d) = init.beta;
  x0.tail(p) = normalize_theta(init.theta);

  GeeSystem sys(ds, weights, h, spec);
  const RootReport root = solve_dogleg([&sys](const VectorXd& x) { return sys(x); },
                                       x0, opts.solve);

  SgeeFit fit;
  fit.theta_raw = root.x.tail(p);
  fit.params.beta = root.x.head(d);
  fit.params.theta = normalize_theta(fit.theta_raw);
  fit.residual_norm = root.residual_norm;
  fit.iterations = root.iterations;
  fit.converged = root.converged;
  fit.link = estimate_link(ds, fit.params, h, spec,
                           index_grid(ds, fit.params.theta, opts.link_grid_points));
  if (opts.compute_inference) {
    const std::vector<MatrixXd> lambda = build_lambda(ds, fit.params, h, spec);
    const std::vector<VectorXd> resid = fitted_residuals(ds, fit.params, h, spec);
    fit.inference = sandwich(lambda, weights, resid);
    fit.std_errors = fit.inference.se;
  }
  return fit;
}

}  // namespace spgee
