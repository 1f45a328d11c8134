#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <spgee/dogleg.hpp>
#include <spgee/error.hpp>
#include <spgee/nelder_mead.hpp>

using Catch::Matchers::WithinAbs;

TEST_CASE("Nelder-Mead minimizes a shifted quadratic bowl") {
  Eigen::Vector4d target(1.0, -2.0, 0.5, 3.0);
  const auto f = [&target](const Eigen::VectorXd& x) {
    return (x - target).squaredNorm() + 7.0;
  };
  const auto res = spgee::nelder_mead(f, Eigen::VectorXd::Zero(4), {});
  REQUIRE(res.converged);
  REQUIRE_THAT(res.value, WithinAbs(7.0, 1e-8));
  for (int k = 0; k < 4; ++k) REQUIRE_THAT(res.x[k], WithinAbs(target[k], 1e-4));
}

TEST_CASE("Nelder-Mead handles a curved valley") {
  const auto rosenbrock = [](const Eigen::VectorXd& x) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
  };
  spgee::NelderMeadOptions opts;
  opts.max_iters = 5000;
  opts.restarts = 2;
  Eigen::Vector2d x0(-1.2, 1.0);
  const auto res = spgee::nelder_mead(rosenbrock, x0, opts);
  REQUIRE(res.value < 1e-8);
  REQUIRE_THAT(res.x[0], WithinAbs(1.0, 1e-3));
  REQUIRE_THAT(res.x[1], WithinAbs(1.0, 1e-3));
}

TEST_CASE("Nelder-Mead respects the iteration budget and never worsens the start") {
  const auto f = [](const Eigen::VectorXd& x) { return std::cos(x[0]) + 0.01 * x[0] * x[0]; };
  spgee::NelderMeadOptions opts;
  opts.max_iters = 3;
  const auto res = spgee::nelder_mead(f, Eigen::VectorXd::Constant(1, 2.0), opts);
  REQUIRE(res.iterations <= 3);
  REQUIRE(res.value <= f(Eigen::VectorXd::Constant(1, 2.0)));
  REQUIRE_THROWS_AS(spgee::nelder_mead(f, Eigen::VectorXd::Constant(1, 2.0),
                                       spgee::NelderMeadOptions{.max_iters = 0}),
                    spgee::Error);
}

TEST_CASE("forward-difference Jacobian approximates an analytic one") {
  const auto f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(2);
    out[0] = x[0] * x[0] + 2.0 * x[0] * x[1];
    out[1] = std::sin(x[1]);
    return out;
  };
  Eigen::Vector2d x(0.7, -0.3);
  const auto jac = spgee::detail::forward_difference_jacobian(f, x, f(x), 1e-6);
  REQUIRE_THAT(jac(0, 0), WithinAbs(2.0 * x[0] + 2.0 * x[1], 1e-4));
  REQUIRE_THAT(jac(0, 1), WithinAbs(2.0 * x[0], 1e-4));
  REQUIRE_THAT(jac(1, 0), WithinAbs(0.0, 1e-4));
  REQUIRE_THAT(jac(1, 1), WithinAbs(std::cos(x[1]), 1e-4));
}

TEST_CASE("dogleg solves a pure translation in at most two iterations") {
  Eigen::Vector3d a(0.3, -0.2, 0.1);
  const auto f = [&a](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x - a; };
  const auto rep = spgee::solve_dogleg(f, Eigen::VectorXd::Zero(3));
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations <= 2);
  for (int k = 0; k < 3; ++k) REQUIRE_THAT(rep.x[k], WithinAbs(a[k], 1e-8));
}

TEST_CASE("dogleg solves a small linear system") {
  Eigen::Matrix2d A;
  A << 2.0, 1.0, 1.0, 3.0;
  Eigen::Vector2d b(1.0, 2.0);
  const auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x - b; };
  const auto rep = spgee::solve_dogleg(f, Eigen::VectorXd::Zero(2));
  REQUIRE(rep.converged);
  REQUIRE(rep.iterations <= 3);
  REQUIRE_THAT(rep.x[0], WithinAbs(0.2, 1e-8));  // inverse of [[2,1],[1,3]] applied to (1,2)
  REQUIRE_THAT(rep.x[1], WithinAbs(0.6, 1e-8));
}

TEST_CASE("dogleg finds the root of a nonlinear system with decreasing merit") {
  const auto f = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd out(2);
    out[0] = v[0] * v[0] + v[1] * v[1] - 4.0;
    out[1] = v[0] - v[1];
    return out;
  };
  const auto rep = spgee::solve_dogleg(f, Eigen::Vector2d(2.0, 1.0));
  REQUIRE(rep.converged);
  const double root = std::sqrt(2.0);
  REQUIRE_THAT(rep.x[0], WithinAbs(root, 1e-7));
  REQUIRE_THAT(rep.x[1], WithinAbs(root, 1e-7));
  for (std::size_t k = 1; k < rep.merit_history.size(); ++k) {
    REQUIRE(rep.merit_history[k] <= rep.merit_history[k - 1]);
  }
  REQUIRE(rep.residual_norm <= 1e-8);
}

TEST_CASE("dogleg degrades to steepest descent on a singular Jacobian") {
  // Rank-one system: every point on x + y = 1 is a root.
  const auto f = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd out(2);
    out[0] = v[0] + v[1] - 1.0;
    out[1] = 2.0 * (v[0] + v[1] - 1.0);
    return out;
  };
  const auto rep = spgee::solve_dogleg(f, Eigen::Vector2d(3.0, 2.0));
  REQUIRE(rep.converged);
  REQUIRE_THAT(rep.x[0] + rep.x[1], WithinAbs(1.0, 1e-7));
}

TEST_CASE("dogleg reaches a distant root by growing the trust region") {
  Eigen::Vector2d a(40.0, -25.0);
  const auto f = [&a](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x - a; };
  spgee::DoglegOptions opts;
  opts.max_iters = 60;
  const auto rep = spgee::solve_dogleg(f, Eigen::VectorXd::Zero(2), opts);
  REQUIRE(rep.converged);
  REQUIRE_THAT(rep.x[0], WithinAbs(40.0, 1e-7));
  REQUIRE_THAT(rep.x[1], WithinAbs(-25.0, 1e-7));
}

TEST_CASE("dogleg rejects a non-finite starting residual") {
  const auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
  };
  REQUIRE_THROWS_AS(spgee::solve_dogleg(f, Eigen::VectorXd::Zero(2)), spgee::Error);
}
