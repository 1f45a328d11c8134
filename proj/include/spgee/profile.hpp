#pragma once

#include <Eigen/Dense>
#include <limits>
#include <utility>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/kernel.hpp"

namespace spgee {

/// Local linear fits of the pooled targets [Y | Z | X] against the index
/// X^T theta, evaluated at every observed index point. Everything the
/// profile estimators need is linear in the targets, so one pass per theta
/// serves any beta:
///   link value     eta(u_ij | beta, theta)  = a_y - a_z . beta
///   link slope     eta_dot(u_ij)            = b_y - b_z . beta
///   cond. means    rho_Z = a_z,  rho_X = a_x
class ProfileSmooth {
public:
  /// `with_index_covariates` additionally smooths the X columns (needed for
  /// the estimating equations, not for the least-squares objective).
  ProfileSmooth(const LongitudinalDataset& ds, const VectorXd& theta, double h,
                const KernelSpec& spec, bool with_index_covariates) {
    const Eigen::Index total = ds.total_obs();
    const int d = ds.d();
    const int p = ds.p();
    const Eigen::Index q = 1 + d + (with_index_covariates ? p : 0);

    u_.resize(total);
    VectorXd w(total);
    MatrixXd targets(total, q);
    offsets_.reserve(ds.n_subjects());
    const double n = static_cast<double>(ds.n_subjects());
    Eigen::Index r = 0;
    for (const auto& sub : ds.subjects()) {
      offsets_.push_back(r);
      const double wi = 1.0 / (n * static_cast<double>(sub.size()));
      for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) {
        u_[r] = sub.x.row(j).dot(theta);
        w[r] = wi;
        targets(r, 0) = sub.y[j];
        targets.block(r, 1, 1, d) = sub.z.row(j);
        if (with_index_covariates) targets.block(r, 1 + d, 1, p) = sub.x.row(j);
      }
    }
    u_min_ = u_.minCoeff();
    u_max_ = u_.maxCoeff();

    LocalLinearSmoother sm(u_, targets, w, spec);
    a_.resize(total, q);
    b_.resize(total, q);
    for (Eigen::Index k = 0; k < total; ++k) {
      const LocalFit f = sm.fit(u_[k], h);
      a_.row(k) = f.a.transpose();
      b_.row(k) = f.b.transpose();
      any_ridged_ = any_ridged_ || f.ridged;
    }
    d_ = d;
    p_ = with_index_covariates ? p : 0;
  }

  Eigen::Index row(std::size_t subject, Eigen::Index j) const {
    return offsets_[subject] + j;
  }

  double index_value(Eigen::Index r) const { return u_[r]; }
  double u_min() const { return u_min_; }
  double u_max() const { return u_max_; }
  bool any_ridged() const { return any_ridged_; }

  double eta_hat(Eigen::Index r, const VectorXd& beta) const {
    return a_(r, 0) - a_.block(r, 1, 1, d_).row(0).dot(beta);
  }
  double eta_dot_hat(Eigen::Index r, const VectorXd& beta) const {
    return b_(r, 0) - b_.block(r, 1, 1, d_).row(0).dot(beta);
  }
  auto rho_z(Eigen::Index r) const { return a_.block(r, 1, 1, d_).row(0); }
  auto rho_x(Eigen::Index r) const { return a_.block(r, 1 + d_, 1, p_).row(0); }

private:
  VectorXd u_;
  MatrixXd a_;
  MatrixXd b_;
  std::vector<Eigen::Index> offsets_;
  double u_min_ = 0.0, u_max_ = 0.0;
  bool any_ridged_ = false;
  int d_ = 0, p_ = 0;
};

/// Per-subject residuals Y_ij - Z_ij^T beta - eta_hat(X_ij^T theta) under the
/// profile link estimate.
inline std::vector<VectorXd> fitted_residuals(const LongitudinalDataset& ds,
                                              const ModelParameters& params,
                                              double h, const KernelSpec& spec) {
  const VectorXd theta = normalize_theta(params.theta);
  ProfileSmooth ps(ds, theta, h, spec, false);
  std::vector<VectorXd> out;
  out.reserve(ds.n_subjects());
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    const auto& sub = ds.subject(i);
    VectorXd r(sub.size());
    for (Eigen::Index j = 0; j < sub.size(); ++j)
      r[j] = sub.y[j] - sub.z.row(j).dot(params.beta) -
             ps.eta_hat(ps.row(i, j), params.beta);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace spgee
