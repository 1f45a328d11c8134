#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"

namespace spgee {

namespace detail {

/// Relative eigenvalue cutoff below which a direction is treated as null.
inline constexpr double kNullspaceRelTol = 1e-10;

struct SymmetricEig {
  VectorXd values;
  MatrixXd vectors;
  double lambda_max_abs = 0.0;
};

inline SymmetricEig symmetric_eig(const MatrixXd& m) {
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw Error("symmetric eigendecomposition failed");
  SymmetricEig out{es.eigenvalues(), es.eigenvectors(), 0.0};
  for (Eigen::Index k = 0; k < out.values.size(); ++k)
    out.lambda_max_abs = std::max(out.lambda_max_abs, std::abs(out.values[k]));
  return out;
}

/// Moore--Penrose inverse of a symmetric PSD matrix: eigenvalues below
/// `kNullspaceRelTol` times the largest magnitude are treated as exact zeros.
/// Reports the numerical rank through `rank` when given.
inline MatrixXd pseudo_inverse(const MatrixXd& m, int* rank = nullptr) {
  const SymmetricEig eig = symmetric_eig(m);
  const double cutoff = kNullspaceRelTol * eig.lambda_max_abs;
  MatrixXd out = MatrixXd::Zero(m.rows(), m.cols());
  int r = 0;
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    if (std::abs(eig.values[k]) > cutoff && eig.lambda_max_abs > 0.0) {
      out.noalias() += (1.0 / eig.values[k]) * eig.vectors.col(k) *
                       eig.vectors.col(k).transpose();
      ++r;
    }
  }
  if (rank) *rank = r;
  return out;
}

/// Product of the eigenvalues of the symmetrized matrix that exceed the
/// relative cutoff — the generalized-variance objective restricted to the
/// non-null directions. Negative eigenvalues within the cutoff are rounded
/// to zero (excluded); larger negative ones flag `psd_violation`.
inline double pseudo_determinant(const MatrixXd& m, bool* psd_violation = nullptr) {
  const SymmetricEig eig = symmetric_eig(m);
  const double cutoff = kNullspaceRelTol * eig.lambda_max_abs;
  double det = 1.0;
  bool any = false;
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    if (eig.values[k] > cutoff) {
      det *= eig.values[k];
      any = true;
    } else if (psd_violation && eig.values[k] < -cutoff) {
      *psd_violation = true;
    }
  }
  return any ? det : 0.0;
}

}  // namespace detail

/// Sandwich covariance of the estimating-equation solution:
///   omega0 = sum_i Lambda_i^T W_i Lambda_i
///   omega1 = sum_i Lambda_i^T W_i e_i e_i^T W_i Lambda_i
///   cov    = omega0^+ omega1 omega0^+   (Moore--Penrose)
/// One null direction (the index-coefficient direction on the unit sphere)
/// is expected; `rank_warning` marks a second unexpected deficiency.
struct SandwichEstimate {
  MatrixXd omega0;
  MatrixXd omega1;
  MatrixXd cov;
  VectorXd se;
  int rank_omega0 = 0;
  bool rank_warning = false;
};

inline SandwichEstimate sandwich(const std::vector<MatrixXd>& lambda,
                                 const std::vector<MatrixXd>& weights,
                                 const std::vector<VectorXd>& residuals) {
  if (lambda.empty() || lambda.size() != weights.size() ||
      lambda.size() != residuals.size())
    throw DimensionError("sandwich: subject block counts do not match");
  const Eigen::Index q = lambda.front().cols();
  SandwichEstimate out;
  out.omega0 = MatrixXd::Zero(q, q);
  out.omega1 = MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const Eigen::Index m = lambda[i].rows();
    if (weights[i].rows() != m || weights[i].cols() != m ||
        residuals[i].size() != m || lambda[i].cols() != q)
      throw DimensionError("sandwich: block dimensions inconsistent at subject " +
                           std::to_string(i));
    const MatrixXd wl = weights[i] * lambda[i];          // m x q
    out.omega0.noalias() += lambda[i].transpose() * wl;
    const VectorXd g = wl.transpose() * residuals[i];    // q
    out.omega1.noalias() += g * g.transpose();
  }
  const MatrixXd pinv = detail::pseudo_inverse(out.omega0, &out.rank_omega0);
  out.cov = pinv * out.omega1 * pinv;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.se.resize(q);
  for (Eigen::Index k = 0; k < q; ++k)
    out.se[k] = std::sqrt(std::max(0.0, out.cov(k, k)));
  const int deficiency = static_cast<int>(q) - out.rank_omega0;
  if (deficiency >= 3)
    throw DegenerateDesignError(
        "sandwich: omega0 rank " + std::to_string(out.rank_omega0) +
        " is deficient by " + std::to_string(deficiency) +
        "; the design does not identify the parameters");
  out.rank_warning = deficiency == 2;
  return out;
}

}  // namespace spgee
