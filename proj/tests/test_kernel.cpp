#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <spgee/dataset.hpp>
#include <spgee/error.hpp>
#include <spgee/kernel.hpp>

#include "oracles.hpp"

using Catch::Matchers::WithinAbs;

namespace {

struct RandomSample {
  Eigen::VectorXd u;
  Eigen::MatrixXd y;
  Eigen::VectorXd w;
};

RandomSample random_sample(int n, int targets, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  RandomSample s;
  s.u.resize(n);
  s.y.resize(n, targets);
  s.w.resize(n);
  for (int j = 0; j < n; ++j) {
    s.u[j] = 3.0 * unif(gen) - 1.5;
    for (int q = 0; q < targets; ++q) s.y(j, q) = normal(gen);
    s.w[j] = 0.2 + unif(gen);
  }
  return s;
}

}  // namespace

TEST_CASE("kernel evaluations match the closed forms") {
  const auto epan = spgee::KernelSpec::epanechnikov();
  REQUIRE_THAT(spgee::kernel_eval(epan, 0.0), WithinAbs(0.75, 1e-15));
  REQUIRE_THAT(spgee::kernel_eval(epan, 0.5), WithinAbs(0.5625, 1e-15));
  REQUIRE_THAT(spgee::kernel_eval(epan, -0.5), WithinAbs(0.5625, 1e-15));
  REQUIRE(spgee::kernel_eval(epan, 1.0) == 0.0);
  REQUIRE(spgee::kernel_eval(epan, -1.2) == 0.0);

  const auto gauss = spgee::KernelSpec::gaussian();
  REQUIRE_THAT(spgee::kernel_eval(gauss, 0.0),
               WithinAbs(1.0 / std::sqrt(2.0 * spgee::kPi), 1e-15));
  REQUIRE_THAT(spgee::kernel_eval(gauss, 1.0), WithinAbs(0.24197072451914337, 1e-15));
  REQUIRE(spgee::kernel_eval(gauss, 1.0) == spgee::kernel_eval(gauss, -1.0));
  REQUIRE(gauss.support_radius == 6.0);
  REQUIRE(epan.support_radius == 1.0);
}

TEST_CASE("local linear fit agrees with a direct normal-equations solve") {
  const auto s = random_sample(200, 1, 91);
  std::vector<double> u(s.u.data(), s.u.data() + s.u.size());
  std::vector<double> y(s.y.data(), s.y.data() + s.y.rows());
  std::vector<double> w(s.w.data(), s.w.data() + s.w.size());

  const spgee::LocalLinearSmoother sm(s.u, s.y, s.w, spgee::KernelSpec::epanechnikov());
  for (double u0 : {-1.0, -0.3, 0.0, 0.4, 1.1}) {
    for (double h : {0.3, 0.6, 1.0}) {
      const auto fit = sm.fit(u0, h);
      const auto ref = oracle::local_linear(u, y, w, u0, h);
      REQUIRE(ref.ok);
      REQUIRE_THAT(fit.a[0], WithinAbs(ref.a, 1e-10));
      REQUIRE_THAT(fit.b[0], WithinAbs(ref.b, 1e-10));
      REQUIRE_FALSE(fit.ridged);
    }
  }
}

TEST_CASE("Gaussian-kernel fit matches the direct solve including the tail cut") {
  const auto s = random_sample(150, 1, 17);
  std::vector<double> u(s.u.data(), s.u.data() + s.u.size());
  std::vector<double> y(s.y.data(), s.y.data() + s.y.rows());
  std::vector<double> w(s.w.data(), s.w.data() + s.w.size());

  const auto spec = spgee::KernelSpec::gaussian();
  const spgee::LocalLinearSmoother sm(s.u, s.y, s.w, spec);
  const auto gauss = [](double t) { return 0.3989422804014326779 * std::exp(-0.5 * t * t); };
  for (double u0 : {-0.8, 0.1, 0.9}) {
    const auto fit = sm.fit(u0, 0.4);
    // The untruncated sum differs only by kernel mass beyond 6 bandwidths.
    const auto ref = oracle::local_linear(u, y, w, u0, 0.4, gauss);
    REQUIRE_THAT(fit.a[0], WithinAbs(ref.a, 1e-6));
    REQUIRE_THAT(fit.b[0], WithinAbs(ref.b, 1e-6));
  }
}

TEST_CASE("multi-target smoothing equals column-by-column smoothing") {
  const auto s = random_sample(120, 4, 23);
  const spgee::LocalLinearSmoother joint(s.u, s.y, s.w, spgee::KernelSpec::epanechnikov());
  const auto fit = joint.fit(0.2, 0.5);
  REQUIRE(fit.a.size() == 4);
  for (int q = 0; q < 4; ++q) {
    const spgee::LocalLinearSmoother single(s.u, s.y.col(q), s.w,
                                            spgee::KernelSpec::epanechnikov());
    const auto ref = single.fit(0.2, 0.5);
    REQUIRE(fit.a[q] == ref.a[0]);
    REQUIRE(fit.b[q] == ref.b[0]);
  }
}

TEST_CASE("local linear smoothing reproduces affine targets exactly") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 20 + static_cast<int>(unif(gen) * 80);
    Eigen::VectorXd u(n), w(n);
    Eigen::MatrixXd y(n, 1);
    const double c0 = normal(gen), c1 = normal(gen);
    for (int j = 0; j < n; ++j) {
      u[j] = 2.0 * unif(gen) - 1.0;
      w[j] = 0.1 + unif(gen);
      y(j, 0) = c0 + c1 * u[j];
    }
    const auto spec = rep % 2 == 0 ? spgee::KernelSpec::epanechnikov()
                                   : spgee::KernelSpec::gaussian();
    const spgee::LocalLinearSmoother sm(u, y, w, spec);
    const double u0 = 1.6 * unif(gen) - 0.8;
    const double h = 0.2 + 0.5 * unif(gen);
    const auto fit = sm.fit(u0, h);
    REQUIRE_THAT(fit.a[0], WithinAbs(c0 + c1 * u0, 1e-9));
    REQUIRE_THAT(fit.b[0], WithinAbs(c1, 1e-9));
  }
}

TEST_CASE("coincident design points trigger the ridge fallback") {
  Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 2.0);
  Eigen::MatrixXd y(5, 1);
  y << 1.0, 2.0, 3.0, 4.0, 5.0;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(5);
  const spgee::LocalLinearSmoother sm(u, y, w, spgee::KernelSpec::epanechnikov());
  const auto fit = sm.fit(2.0, 0.5);
  REQUIRE(fit.ridged);
  // With zero curvature the ridged solve returns (essentially) the local mean.
  REQUIRE_THAT(fit.a[0], WithinAbs(3.0, 1e-6));
}

TEST_CASE("evaluation far from all data raises an error that carries the location") {
  const auto s = random_sample(50, 1, 3);
  const spgee::LocalLinearSmoother sm(s.u, s.y, s.w, spgee::KernelSpec::epanechnikov());
  try {
    sm.fit(25.0, 0.5);
    FAIL("expected InsufficientLocalDataError");
  } catch (const spgee::InsufficientLocalDataError& e) {
    REQUIRE(e.at() == 25.0);
  }
}

TEST_CASE("smoother construction rejects malformed inputs") {
  Eigen::VectorXd u(3), w(3);
  u << 0.0, 1.0, 2.0;
  w << 1.0, 1.0, 1.0;
  Eigen::MatrixXd y(3, 1);
  y << 1.0, 2.0, 3.0;
  const auto spec = spgee::KernelSpec::epanechnikov();

  SECTION("row mismatch") {
    Eigen::VectorXd short_w(2);
    short_w << 1.0, 1.0;
    REQUIRE_THROWS_AS(spgee::LocalLinearSmoother(u, y, short_w, spec), spgee::DimensionError);
  }
  SECTION("empty sample") {
    REQUIRE_THROWS_AS(
        spgee::LocalLinearSmoother(Eigen::VectorXd(), Eigen::MatrixXd(0, 1), Eigen::VectorXd(), spec),
        spgee::DimensionError);
  }
  SECTION("negative weight") {
    Eigen::VectorXd bad = w;
    bad[1] = -0.5;
    REQUIRE_THROWS_AS(spgee::LocalLinearSmoother(u, y, bad, spec), spgee::Error);
  }
  SECTION("all-zero weights") {
    REQUIRE_THROWS_AS(spgee::LocalLinearSmoother(u, y, Eigen::VectorXd::Zero(3), spec),
                      spgee::Error);
  }
  SECTION("non-positive bandwidth") {
    const spgee::LocalLinearSmoother sm(u, y, w, spec);
    REQUIRE_THROWS_AS(sm.fit(1.0, 0.0), spgee::Error);
    REQUIRE_THROWS_AS(sm.fit(1.0, -0.1), spgee::Error);
  }
}

TEST_CASE("profile sample pools observations with weights 1/(n m_i)") {
  std::vector<spgee::SubjectBlock> subjects(2);
  subjects[0].id = "a";
  subjects[0].times = Eigen::Vector2d(0.0, 1.0);
  subjects[0].y = Eigen::Vector2d(5.0, 6.0);
  subjects[0].z = Eigen::MatrixXd::Constant(2, 1, 2.0);
  subjects[0].x = Eigen::MatrixXd::Constant(2, 1, 0.5);
  subjects[1].id = "b";
  subjects[1].times = Eigen::Vector3d(0.0, 1.0, 2.0);
  subjects[1].y = Eigen::Vector3d(1.0, 2.0, 3.0);
  subjects[1].z = Eigen::MatrixXd::Constant(3, 1, -1.0);
  subjects[1].x = Eigen::MatrixXd::Constant(3, 1, 1.5);
  const spgee::LongitudinalDataset ds(std::move(subjects), 1, 1);

  spgee::ModelParameters params;
  params.beta = Eigen::VectorXd::Constant(1, 3.0);
  params.theta = Eigen::VectorXd::Constant(1, 1.0);
  const auto s = spgee::detail::profile_sample(ds, params);
  REQUIRE(s.u.size() == 5);
  REQUIRE_THAT(s.w.sum(), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(s.w[0], WithinAbs(0.25, 1e-15));       // subject a: 1/(2*2)
  REQUIRE_THAT(s.w[2], WithinAbs(1.0 / 6.0, 1e-15));  // subject b: 1/(2*3)
  REQUIRE_THAT(s.u[0], WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(s.y(0, 0), WithinAbs(5.0 - 2.0 * 3.0, 1e-15));
}

TEST_CASE("profile link recovers an affine link exactly") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  const Eigen::Vector2d beta(1.5, -0.5);
  const Eigen::VectorXd theta = spgee::normalize_theta(Eigen::Vector3d(2.0, 1.0, 2.0));

  std::vector<spgee::SubjectBlock> subjects;
  for (int i = 0; i < 12; ++i) {
    const int m = 2 + static_cast<int>(unif(gen) * 4);
    spgee::SubjectBlock s;
    s.id = "s" + std::to_string(i);
    s.times.resize(m);
    s.y.resize(m);
    s.z.resize(m, 2);
    s.x.resize(m, 3);
    for (int j = 0; j < m; ++j) {
      s.times[j] = j;
      for (int k = 0; k < 2; ++k) s.z(j, k) = normal(gen);
      for (int k = 0; k < 3; ++k) s.x(j, k) = unif(gen);
      const double u = s.x.row(j).dot(theta);
      s.y[j] = s.z.row(j).dot(beta) + (0.7 + 2.0 * u);  // affine link
    }
    subjects.push_back(std::move(s));
  }
  const spgee::LongitudinalDataset ds(std::move(subjects), 2, 3);

  spgee::ModelParameters params{beta, theta};
  Eigen::VectorXd grid(3);
  grid << 0.4, 0.8, 1.2;
  const auto link = spgee::profile_link(ds, params, 0.4, spgee::KernelSpec::epanechnikov(), grid);
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    REQUIRE_THAT(link.eta[k], WithinAbs(0.7 + 2.0 * grid[k], 1e-9));
    REQUIRE_THAT(link.eta_dot[k], WithinAbs(2.0, 1e-9));
  }
}

TEST_CASE("conditional mean smoother is the intercept of the local fit") {
  const auto s = random_sample(80, 2, 55);
  const auto a = spgee::conditional_mean_smooth(s.u, s.y, s.w, 0.1, 0.6,
                                                spgee::KernelSpec::epanechnikov());
  const auto fit = spgee::LocalLinearSmoother(s.u, s.y, s.w, spgee::KernelSpec::epanechnikov())
                       .fit(0.1, 0.6);
  REQUIRE(a == fit.a);
}
