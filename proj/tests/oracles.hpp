#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written from the defining formulas with direct
// summation (long double accumulators, no shared code with the library's
// numerics) so agreement is meaningful.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <spgee/dataset.hpp>

namespace oracle {

using spgee::MatrixXd;
using spgee::VectorXd;

inline double epanechnikov(double u) {
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

struct LocalLine {
  double a = 0.0;
  double b = 0.0;
  bool ok = false;  // false when the window mass or curvature vanishes
};

/// Weighted local linear fit at u0 by direct normal equations in the
/// uncentered basis, solved with Cramer's rule on long double sums.
inline LocalLine local_linear(const std::vector<double>& u,
                              const std::vector<double>& y,
                              const std::vector<double>& w, double u0, double h,
                              const std::function<double(double)>& kernel = epanechnikov) {
  long double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    const long double c = u[j] - u0;
    const long double k = w[j] * kernel(static_cast<double>(c / h)) / h;
    s0 += k;
    s1 += k * c;
    s2 += k * c * c;
    t0 += k * y[j];
    t1 += k * c * y[j];
  }
  LocalLine out;
  const long double det = s0 * s2 - s1 * s1;
  if (s0 <= 0 || std::abs(static_cast<double>(det)) <= 0) return out;
  out.a = static_cast<double>((s2 * t0 - s1 * t1) / det);
  out.b = static_cast<double>((s0 * t1 - s1 * t0) / det);
  out.ok = true;
  return out;
}

/// Profile sum of squares by direct summation: smooths Y - Z beta against
/// X^T theta over the pooled sample for every observation, then accumulates
/// the weighted squared residuals.
inline double puls_objective(const spgee::LongitudinalDataset& ds,
                             const VectorXd& beta, const VectorXd& theta,
                             double h) {
  std::vector<double> u, v, w;
  const double n = static_cast<double>(ds.n_subjects());
  for (const auto& sub : ds.subjects()) {
    for (Eigen::Index j = 0; j < sub.size(); ++j) {
      u.push_back(sub.x.row(j).dot(theta));
      v.push_back(sub.y[j] - sub.z.row(j).dot(beta));
      w.push_back(1.0 / (n * static_cast<double>(sub.size())));
    }
  }
  long double q = 0;
  std::size_t r = 0;
  for (const auto& sub : ds.subjects()) {
    for (Eigen::Index j = 0; j < sub.size(); ++j, ++r) {
      const LocalLine fit = local_linear(u, v, w, u[r], h);
      if (!fit.ok) throw std::runtime_error("oracle smoother failed");
      const long double resid = v[r] - fit.a;
      q += resid * resid * w[r];
    }
  }
  return static_cast<double>(q);
}

/// E[log xi^2] for xi ~ N(0,1) by Simpson quadrature after the substitution
/// x = e^s (the integrand 4 s phi(e^s) e^s is smooth and rapidly decaying).
inline double mean_log_chi2() {
  const double lo = -60.0, hi = 6.0;
  const int segments = 20000;  // even
  const double step = (hi - lo) / segments;
  const auto f = [](double s) {
    const double x = std::exp(s);
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * spgee::kPi);
    return 4.0 * s * phi * x;
  };
  long double acc = f(lo) + f(hi);
  for (int k = 1; k < segments; ++k)
    acc += f(lo + k * step) * (k % 2 == 1 ? 4.0 : 2.0);
  return static_cast<double>(acc * step / 3.0);
}

inline double mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(s / (v.size() - 1)));
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mad(const std::vector<double>& v) {
  const double med = median(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - med));
  return median(dev);
}

/// Correlation of two draws at integer lag k under the serial structure
/// gamma * rho^k extended to negative rho via the alternating sign pattern.
inline double serial_corr_integer_lag(double gamma, double rho, int lag) {
  if (lag == 0) return 1.0;
  double power = 1.0;
  for (int i = 0; i < lag; ++i) power *= rho;
  return gamma * power;
}

}  // namespace oracle
