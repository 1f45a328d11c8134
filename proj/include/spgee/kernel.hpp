#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"

namespace spgee {

enum class KernelKind { Epanechnikov, Gaussian };

/// Kernel choice plus its (effective) support radius in bandwidth units.
/// Epanechnikov is compactly supported on [-1,1]; the Gaussian tail is cut
/// at 6 standard deviations when windowing, where the density is ~1e-8.
struct KernelSpec {
  KernelKind kind = KernelKind::Epanechnikov;
  double support_radius = 1.0;

  static KernelSpec epanechnikov() { return {KernelKind::Epanechnikov, 1.0}; }
  static KernelSpec gaussian() { return {KernelKind::Gaussian, 6.0}; }
};

inline double kernel_eval(const KernelSpec& spec, double u) {
  switch (spec.kind) {
    case KernelKind::Epanechnikov:
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelKind::Gaussian:
      return 0.3989422804014326779 * std::exp(-0.5 * u * u);
  }
  return 0.0;
}

/// Weighted scatter of design points u against (possibly multi-column)
/// targets y, with per-point nonnegative weights w.
struct WeightedSample {
  VectorXd u;
  MatrixXd y;
  VectorXd w;
};

/// Result of one local linear fit at a point u0: `a` holds the fitted value
/// of each target column at u0, `b` the fitted slope. `effective_mass` is
/// the summed kernel weight of the window; `ridged` flags the near-singular
/// fallback.
struct LocalFit {
  VectorXd a;
  VectorXd b;
  double effective_mass = 0.0;
  bool ridged = false;
};

namespace detail {
inline constexpr double kMinKernelMass = 1e-10;
inline constexpr double kRidgeCondLimit = 1e12;
inline constexpr double kRidgeScale = 1e-8;
}  // namespace detail

/// Local linear smoothing engine. Sorts the sample by design point once so
/// each evaluation only touches the kernel window; all fits solve the same
/// 2x2 weighted normal equations, column-wise over targets.
class LocalLinearSmoother {
public:
  LocalLinearSmoother(const VectorXd& u, const MatrixXd& y, const VectorXd& w,
                      const KernelSpec& spec)
      : spec_(spec) {
    const Eigen::Index n = u.size();
    if (y.rows() != n || w.size() != n)
      throw DimensionError("local linear smoother: u, y, w must have equal row counts");
    if (n == 0) throw DimensionError("local linear smoother: empty sample");
    bool any_positive = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (w[j] < 0.0) throw Error("local linear smoother: negative weight");
      if (w[j] > 0.0) any_positive = true;
    }
    if (!any_positive) throw Error("local linear smoother: all weights zero");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return u[a] < u[b]; });
    u_.resize(n);
    w_.resize(n);
    y_.resize(n, y.cols());
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index j = order[static_cast<std::size_t>(k)];
      u_[k] = u[j];
      w_[k] = w[j];
      y_.row(k) = y.row(j);
    }
  }

  /// Solve the weighted local least squares at u0 with bandwidth h.
  LocalFit fit(double u0, double h) const {
    if (!(h > 0.0)) throw Error("local linear fit: bandwidth must be positive");
    const double radius = spec_.support_radius * h;
    const double* begin = u_.data();
    const double* end = begin + u_.size();
    const Eigen::Index lo = std::lower_bound(begin, end, u0 - radius) - begin;
    const Eigen::Index hi = std::upper_bound(begin, end, u0 + radius) - begin;
    const Eigen::Index q = y_.cols();

    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    VectorXd t0 = VectorXd::Zero(q);
    VectorXd t1 = VectorXd::Zero(q);
    const double inv_h = 1.0 / h;
    for (Eigen::Index j = lo; j < hi; ++j) {
      const double c = u_[j] - u0;
      const double k = w_[j] * kernel_eval(spec_, c * inv_h) * inv_h;
      if (k == 0.0) continue;
      s0 += k;
      s1 += k * c;
      s2 += k * c * c;
      t0.noalias() += k * y_.row(j).transpose();
      t1.noalias() += (k * c) * y_.row(j).transpose();
    }
    if (s0 < detail::kMinKernelMass)
      throw InsufficientLocalDataError(
          "local linear fit: kernel mass " + std::to_string(s0) + " at u0 = " + std::to_string(u0),
          u0);

    LocalFit out;
    out.effective_mass = s0;
    // Condition of [[s0,s1],[s1,s2]] from its eigenvalues.
    const double tr = s0 + s2;
    const double disc = std::sqrt(std::max(0.0, (s0 - s2) * (s0 - s2) + 4.0 * s1 * s1));
    const double lam_min = 0.5 * (tr - disc);
    const double lam_max = 0.5 * (tr + disc);
    double a0 = s0, a2 = s2;
    if (!(lam_min > 0.0) || lam_max / lam_min > detail::kRidgeCondLimit) {
      const double ridge = detail::kRidgeScale * tr;
      a0 += ridge;
      a2 += ridge;
      out.ridged = true;
    }
    const double det = a0 * a2 - s1 * s1;
    out.a = (a2 * t0 - s1 * t1) / det;
    out.b = (a0 * t1 - s1 * t0) / det;
    return out;
  }

  const KernelSpec& spec() const { return spec_; }

private:
  KernelSpec spec_;
  VectorXd u_;   // sorted ascending
  MatrixXd y_;
  VectorXd w_;
};

inline LocalFit local_linear_fit(const WeightedSample& sample, double u0, double h,
                                 const KernelSpec& spec) {
  return LocalLinearSmoother(sample.u, sample.y, sample.w, spec).fit(u0, h);
}

/// Local linear conditional-mean estimate of each target column at u0.
inline VectorXd conditional_mean_smooth(const VectorXd& index, const MatrixXd& targets,
                                        const VectorXd& weights, double u0, double h,
                                        const KernelSpec& spec) {
  return LocalLinearSmoother(index, targets, weights, spec).fit(u0, h).a;
}

/// Link function estimate (values and derivatives) over a set of points.
struct LinkEstimate {
  VectorXd grid;
  VectorXd eta;
  VectorXd eta_dot;
};

namespace detail {

/// Pooled sample (X_ij^T theta, Y_ij - Z_ij^T beta) with subject weights
/// w_i = 1/(n m_i).
inline WeightedSample profile_sample(const LongitudinalDataset& ds,
                                     const ModelParameters& params) {
  const Eigen::Index total = ds.total_obs();
  WeightedSample s;
  s.u.resize(total);
  s.y.resize(total, 1);
  s.w.resize(total);
  const double n = static_cast<double>(ds.n_subjects());
  Eigen::Index r = 0;
  for (const auto& sub : ds.subjects()) {
    const double wi = 1.0 / (n * static_cast<double>(sub.size()));
    for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) {
      s.u[r] = sub.x.row(j).dot(params.theta);
      s.y(r, 0) = sub.y[j] - sub.z.row(j).dot(params.beta);
      s.w[r] = wi;
    }
  }
  return s;
}

}  // namespace detail

/// Profile local linear estimate of the link function given (beta, theta),
/// evaluated at `eval_points`.
inline LinkEstimate profile_link(const LongitudinalDataset& ds, const ModelParameters& params,
                                 double h, const KernelSpec& spec,
                                 const VectorXd& eval_points) {
  const WeightedSample s = detail::profile_sample(ds, params);
  LocalLinearSmoother sm(s.u, s.y, s.w, spec);
  LinkEstimate out;
  out.grid = eval_points;
  out.eta.resize(eval_points.size());
  out.eta_dot.resize(eval_points.size());
  for (Eigen::Index k = 0; k < eval_points.size(); ++k) {
    const LocalFit f = sm.fit(eval_points[k], h);
    out.eta[k] = f.a[0];
    out.eta_dot[k] = f.b[0];
  }
  return out;
}

}  // namespace spgee
