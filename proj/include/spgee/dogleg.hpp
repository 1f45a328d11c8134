#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "spgee/error.hpp"

namespace spgee {

struct DoglegOptions {
  double tol = 1e-8;          // stop when ||F(x)|| <= tol
  int max_iters = 200;
  double trust_radius = 1.0;  // initial
  double max_trust_radius = 100.0;
  double step_tol = 1e-14;    // give up when the trust region collapses
  double fd_step = 1e-6;      // forward-difference scale, per component: fd_step*(1+|x|)
};

struct RootReport {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> merit_history;  // 0.5*||F||^2 at accepted iterates
};

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::MatrixXd forward_difference_jacobian(const VectorFn& f, const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& fx, double fd_step) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = fx.size();
  Eigen::MatrixXd jac(m, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double step = fd_step * (1.0 + std::abs(x[k]));
    xp[k] = x[k] + step;
    jac.col(k) = (f(xp) - fx) / step;
    xp[k] = x[k];
  }
  return jac;
}

}  // namespace detail

/// Trust-region dogleg root finder for square nonlinear systems, minimizing
/// the merit 0.5*||F(x)||^2. The Newton step comes from a rank-revealing QR
/// solve; when the Jacobian is singular the step degrades to the Cauchy
/// point along the steepest-descent direction of the merit.
inline RootReport solve_dogleg(const VectorFn& f, const Eigen::VectorXd& x0,
                               const DoglegOptions& opts = {}) {
  RootReport rep;
  rep.x = x0;
  rep.residual = f(x0);
  if (!rep.residual.allFinite())
    throw Error("solve_dogleg: residual is not finite at the starting point");
  rep.residual_norm = rep.residual.norm();
  rep.merit_history.push_back(0.5 * rep.residual_norm * rep.residual_norm);

  double radius = opts.trust_radius;
  while (rep.iterations < opts.max_iters) {
    if (rep.residual_norm <= opts.tol) {
      rep.converged = true;
      return rep;
    }
    ++rep.iterations;

    const Eigen::MatrixXd jac =
        detail::forward_difference_jacobian(f, rep.x, rep.residual, opts.fd_step);
    const Eigen::VectorXd grad = jac.transpose() * rep.residual;  // gradient of the merit
    const double grad_norm = grad.norm();
    if (grad_norm == 0.0) break;  // stationary but not a root

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    qr.setThreshold(1e-12);
    const bool full_rank = qr.rank() == jac.cols();
    Eigen::VectorXd newton;
    if (full_rank) {
      newton = qr.solve(-rep.residual);
      if (!newton.allFinite()) newton.setZero();
    }

    // Cauchy point: minimizer of the quadratic model along -grad.
    const double jg_sq = (jac * grad).squaredNorm();
    const double cauchy_len = jg_sq > 0.0 ? grad.squaredNorm() / jg_sq * grad_norm : 0.0;

    Eigen::VectorXd step;
    if (full_rank && newton.norm() <= radius) {
      step = newton;
    } else if (cauchy_len >= radius || !full_rank) {
      // Steepest descent, cut at the trust boundary.
      step = -(std::min(cauchy_len, radius) / grad_norm) * grad;
    } else {
      // Walk from the Cauchy point toward the Newton point until the boundary.
      const Eigen::VectorXd pc = -(cauchy_len / grad_norm) * grad;
      const Eigen::VectorXd dp = newton - pc;
      const double a = dp.squaredNorm();
      const double b = 2.0 * pc.dot(dp);
      const double c = pc.squaredNorm() - radius * radius;
      const double t = a > 0.0 ? (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a) : 0.0;
      step = pc + t * dp;
    }

    const double step_norm = step.norm();
    if (step_norm < opts.step_tol) break;

    const Eigen::VectorXd x_new = rep.x + step;
    const Eigen::VectorXd f_new = f(x_new);
    const double merit_old = 0.5 * rep.residual.squaredNorm();
    const double merit_new = f_new.allFinite() ? 0.5 * f_new.squaredNorm()
                                               : std::numeric_limits<double>::infinity();
    const double predicted = merit_old - 0.5 * (rep.residual + jac * step).squaredNorm();
    const double actual = merit_old - merit_new;
    const double ratio = predicted > 0.0 ? actual / predicted : (actual > 0.0 ? 1.0 : -1.0);

    if (ratio < 0.25) {
      radius = 0.25 * step_norm;
    } else if (ratio > 0.75 && step_norm >= 0.99 * radius) {
      radius = std::min(2.0 * radius, opts.max_trust_radius);
    }
    if (radius < opts.step_tol) break;

    if (ratio > 1e-4) {  // accept
      rep.x = x_new;
      rep.residual = f_new;
      rep.residual_norm = f_new.norm();
      rep.merit_history.push_back(merit_new);
    }
  }
  rep.converged = rep.residual_norm <= opts.tol;
  return rep;
}

}  // namespace spgee
