#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "spgee/error.hpp"

namespace spgee {

struct NelderMeadOptions {
  int max_iters = 2000;
  double param_tol = 1e-8;   // simplex diameter
  double objective_tol = 1e-10;  // spread of vertex values
  double init_step = 0.1;
  int restarts = 1;          // re-seed from the best vertex with a shrunken simplex
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimizer with standard reflection, expansion,
/// contraction and shrink coefficients.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0, const NelderMeadOptions& opts) {
  if (opts.max_iters < 1) throw Error("nelder_mead: max_iters must be >= 1");
  const Eigen::Index n = x0.size();
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  struct Vertex {
    Eigen::VectorXd x;
    double value;
  };
  std::vector<Vertex> simplex;
  auto seed_simplex = [&](const Eigen::VectorXd& center, double step) {
    simplex.clear();
    simplex.push_back({center, f(center)});
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::VectorXd v = center;
      v[k] += step * std::max(1.0, std::abs(center[k]));
      simplex.push_back({v, f(v)});
    }
  };

  NelderMeadResult result;
  result.x = x0;
  result.value = f(x0);

  int iters = 0;
  double step = opts.init_step;
  for (int round = 0; round <= opts.restarts; ++round) {
    seed_simplex(result.x, step);
    while (iters < opts.max_iters) {
      std::sort(simplex.begin(), simplex.end(),
                [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
      double diameter = 0.0;
      for (std::size_t k = 1; k < simplex.size(); ++k)
        diameter = std::max(diameter, (simplex[k].x - simplex[0].x).lpNorm<Eigen::Infinity>());
      const double spread = simplex.back().value - simplex.front().value;
      if (diameter < opts.param_tol && spread < opts.objective_tol) {
        result.converged = true;
        break;
      }
      ++iters;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (std::size_t k = 0; k + 1 < simplex.size(); ++k) centroid += simplex[k].x;
      centroid /= static_cast<double>(n);

      const Vertex& worst = simplex.back();
      Eigen::VectorXd xr = centroid + alpha * (centroid - worst.x);
      const double fr = f(xr);
      if (fr < simplex.front().value) {
        Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
        const double fe = f(xe);
        simplex.back() = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
      } else if (fr < simplex[simplex.size() - 2].value) {
        simplex.back() = {xr, fr};
      } else {
        const bool outside = fr < worst.value;
        Eigen::VectorXd xc = outside ? centroid + rho * (xr - centroid)
                                     : centroid + rho * (worst.x - centroid);
        const double fc = f(xc);
        if (fc < std::min(fr, worst.value)) {
          simplex.back() = {xc, fc};
        } else {
          for (std::size_t k = 1; k < simplex.size(); ++k) {
            simplex[k].x = simplex[0].x + sigma * (simplex[k].x - simplex[0].x);
            simplex[k].value = f(simplex[k].x);
          }
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
    if (simplex.front().value < result.value) {
      result.x = simplex.front().x;
      result.value = simplex.front().value;
    }
    step *= 0.1;
    if (iters >= opts.max_iters) break;
  }
  result.iterations = iters;
  return result;
}

}  // namespace spgee
