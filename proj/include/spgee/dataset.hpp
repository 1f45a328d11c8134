#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spgee/error.hpp"

namespace spgee {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// All observations of one subject. Rows of y, z, x line up with times.
struct SubjectBlock {
  std::string id;
  VectorXd times;  // observation times, sorted ascending
  VectorXd y;      // responses
  MatrixXd z;      // m_i x d linear covariates
  MatrixXd x;      // m_i x p index covariates

  Eigen::Index size() const { return times.size(); }

  /// Reorder all rows so that times are ascending (stable for ties).
  void sort_by_time() {
    const Eigen::Index m = times.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return times[a] < times[b]; });
    SubjectBlock tmp;
    tmp.times.resize(m);
    tmp.y.resize(m);
    tmp.z.resize(m, z.cols());
    tmp.x.resize(m, x.cols());
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index j = order[static_cast<std::size_t>(k)];
      tmp.times[k] = times[j];
      tmp.y[k] = y[j];
      if (z.cols() > 0 && j < z.rows()) tmp.z.row(k) = z.row(j);
      if (x.cols() > 0 && j < x.rows()) tmp.x.row(k) = x.row(j);
    }
    times = std::move(tmp.times);
    y = std::move(tmp.y);
    z = std::move(tmp.z);
    x = std::move(tmp.x);
  }
};

/// Unbalanced longitudinal dataset. Immutable after construction; subjects
/// keep their order of first appearance so downstream results are
/// reproducible without any RNG involvement.
class LongitudinalDataset {
public:
  LongitudinalDataset() : d_(0), p_(0), time_domain_(0.0, 0.0) {}

  /// `sort_times` reorders each subject's rows by time (the normal case);
  /// pass false to keep raw ordering, e.g. to exercise validation.
  LongitudinalDataset(std::vector<SubjectBlock> subjects, int d, int p,
                      bool sort_times = true)
      : subjects_(std::move(subjects)), d_(d), p_(p) {
    if (sort_times) {
      for (auto& s : subjects_) s.sort_by_time();
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : subjects_) {
      for (Eigen::Index j = 0; j < s.times.size(); ++j) {
        lo = std::min(lo, s.times[j]);
        hi = std::max(hi, s.times[j]);
      }
    }
    if (lo > hi) {
      lo = hi = 0.0;
    }
    time_domain_ = {lo, hi};
  }

  const std::vector<SubjectBlock>& subjects() const { return subjects_; }
  const SubjectBlock& subject(std::size_t i) const { return subjects_[i]; }
  std::size_t n_subjects() const { return subjects_.size(); }
  int d() const { return d_; }
  int p() const { return p_; }
  std::pair<double, double> time_domain() const { return time_domain_; }

  /// Total observation count T_n = sum of m_i.
  Eigen::Index total_obs() const {
    Eigen::Index t = 0;
    for (const auto& s : subjects_) t += s.size();
    return t;
  }

private:
  std::vector<SubjectBlock> subjects_;
  int d_;
  int p_;
  std::pair<double, double> time_domain_;
};

/// Parametric part of the model: linear coefficients and the index
/// direction, the latter kept on the unit sphere with the sign convention
/// that its first non-negligible component is positive.
struct ModelParameters {
  VectorXd beta;
  VectorXd theta;
};

inline constexpr double kThetaZeroTol = 1e-12;
inline constexpr double kPi = 3.14159265358979323846;

/// Scale v to unit Euclidean norm and fix the sign so that the first
/// component with magnitude above 1e-12 is strictly positive.
inline VectorXd normalize_theta(const VectorXd& v) {
  const double norm = v.norm();
  if (!(norm > kThetaZeroTol)) {
    throw DegenerateDirectionError("normalize_theta: direction has near-zero norm");
  }
  VectorXd u = v / norm;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    if (std::abs(u[k]) > kThetaZeroTol) {
      if (u[k] < 0.0) u = -u;
      break;
    }
  }
  return u;
}

inline bool theta_is_normalized(const VectorXd& theta, double tol = 1e-12) {
  if (std::abs(theta.norm() - 1.0) > tol) return false;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (std::abs(theta[k]) > kThetaZeroTol) return theta[k] > 0.0;
  }
  return false;
}

/// Outcome of checking a dataset against its structural invariants.
/// `violations` are hard failures; `notes` flag oddities (duplicate
/// observation times) that the estimators tolerate.
struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> notes;

  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate(const LongitudinalDataset& ds) {
  ValidationReport rep;
  auto bad = [&rep](const std::string& msg) { rep.violations.push_back(msg); };
  const auto [tlo, thi] = ds.time_domain();
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    const auto& s = ds.subject(i);
    const std::string who = "subject '" + s.id + "'";
    const Eigen::Index m = s.times.size();
    if (m < 1) {
      bad(who + ": no observations");
      continue;
    }
    if (s.y.size() != m) bad(who + ": y has " + std::to_string(s.y.size()) + " rows, expected " + std::to_string(m));
    if (s.z.rows() != m || s.z.cols() != ds.d())
      bad(who + ": z is " + std::to_string(s.z.rows()) + "x" + std::to_string(s.z.cols()) +
          ", expected " + std::to_string(m) + "x" + std::to_string(ds.d()));
    if (s.x.rows() != m || s.x.cols() != ds.p())
      bad(who + ": x is " + std::to_string(s.x.rows()) + "x" + std::to_string(s.x.cols()) +
          ", expected " + std::to_string(m) + "x" + std::to_string(ds.p()));
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!std::isfinite(s.times[j]))
        bad(who + ", row " + std::to_string(j) + ": non-finite time");
      if (j < s.y.size() && !std::isfinite(s.y[j]))
        bad(who + ", row " + std::to_string(j) + ": non-finite response");
      if (j > 0 && s.times[j] < s.times[j - 1])
        bad(who + ", row " + std::to_string(j) + ": times not sorted ascending");
      if (j > 0 && s.times[j] == s.times[j - 1])
        rep.notes.push_back(who + ", row " + std::to_string(j) + ": duplicate observation time " +
                            std::to_string(s.times[j]));
      if (std::isfinite(s.times[j]) && (s.times[j] < tlo || s.times[j] > thi))
        bad(who + ", row " + std::to_string(j) + ": time outside the dataset time domain");
    }
    if (s.z.rows() == m && s.z.cols() == ds.d() && !s.z.allFinite())
      bad(who + ": non-finite entry in z");
    if (s.x.rows() == m && s.x.cols() == ds.p() && !s.x.allFinite())
      bad(who + ": non-finite entry in x");
  }
  return rep;
}

/// Observation order that depends only on content, not on subject labels or
/// file order. Sums accumulated in this order are invariant under subject
/// relabeling, which keeps the estimators exactly deterministic.
inline std::vector<std::pair<std::size_t, Eigen::Index>> canonical_observation_order(
    const LongitudinalDataset& ds) {
  std::vector<std::pair<std::size_t, Eigen::Index>> order;
  order.reserve(static_cast<std::size_t>(ds.total_obs()));
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    for (Eigen::Index j = 0; j < ds.subject(i).size(); ++j) order.emplace_back(i, j);
  }
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    const auto& sa = ds.subject(a.first);
    const auto& sb = ds.subject(b.first);
    if (sa.times[a.second] != sb.times[b.second]) return sa.times[a.second] < sb.times[b.second];
    return sa.y[a.second] < sb.y[b.second];
  });
  return order;
}

/// Subject order keyed by each subject's first observation (time, response):
/// invariant under relabeling for continuous data.
inline std::vector<std::size_t> canonical_subject_order(const LongitudinalDataset& ds) {
  std::vector<std::size_t> order(ds.n_subjects());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = ds.subject(a);
    const auto& sb = ds.subject(b);
    if (sa.times[0] != sb.times[0]) return sa.times[0] < sb.times[0];
    return sa.y[0] < sb.y[0];
  });
  return order;
}

}  // namespace spgee
