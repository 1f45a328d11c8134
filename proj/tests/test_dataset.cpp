#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <spgee/csv.hpp>
#include <spgee/dataset.hpp>
#include <spgee/error.hpp>

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

spgee::SubjectBlock make_block(const std::string& id, std::initializer_list<double> times,
                               std::initializer_list<double> y, int d, int p,
                               unsigned covariate_seed) {
  spgee::SubjectBlock s;
  s.id = id;
  s.times = Eigen::Map<const Eigen::VectorXd>(std::data(times),
                                              static_cast<Eigen::Index>(times.size()));
  s.y = Eigen::Map<const Eigen::VectorXd>(std::data(y), static_cast<Eigen::Index>(y.size()));
  std::mt19937_64 gen(covariate_seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  s.z.resize(s.times.size(), d);
  s.x.resize(s.times.size(), p);
  for (Eigen::Index j = 0; j < s.times.size(); ++j) {
    for (int k = 0; k < d; ++k) s.z(j, k) = unif(gen);
    for (int k = 0; k < p; ++k) s.x(j, k) = unif(gen);
  }
  return s;
}

spgee::LongitudinalDataset small_dataset() {
  std::vector<spgee::SubjectBlock> subjects;
  subjects.push_back(make_block("a", {0.0, 1.3, 2.1}, {1.0, -0.5, 0.25}, 2, 3, 11));
  subjects.push_back(make_block("b", {0.4, 5.0}, {2.0, 0.75}, 2, 3, 12));
  subjects.push_back(make_block("c", {0.0, 1.0, 2.0, 3.0}, {0.0, 0.5, -1.5, 3.0}, 2, 3, 13));
  return spgee::LongitudinalDataset(std::move(subjects), 2, 3);
}

std::filesystem::path temp_csv_path(const std::string& stem) {
  return std::filesystem::temp_directory_path() / (stem + ".csv");
}

}  // namespace

TEST_CASE("normalize_theta maps to the unit sphere with a positive leading sign") {
  Eigen::Vector3d v(2.0, 1.0, 2.0);
  const Eigen::VectorXd u = spgee::normalize_theta(v);
  REQUIRE_THAT(u.norm(), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(u[0], WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(u[1], WithinAbs(1.0 / 3.0, 1e-15));
  REQUIRE_THAT(u[2], WithinAbs(2.0 / 3.0, 1e-15));

  SECTION("a negated input lands on the same representative") {
    const Eigen::VectorXd w = spgee::normalize_theta(Eigen::Vector3d(-2.0, -1.0, -2.0));
    REQUIRE(w == u);
  }

  SECTION("a negligible leading component does not decide the sign") {
    const Eigen::VectorXd w = spgee::normalize_theta(Eigen::Vector3d(1e-15, -3.0, 4.0));
    REQUIRE(w[1] > 0.0);
    REQUIRE_THAT(w[1], WithinAbs(0.6, 1e-15));
    REQUIRE_THAT(w[2], WithinAbs(-0.8, 1e-15));
  }

  SECTION("near-zero directions are rejected") {
    REQUIRE_THROWS_AS(spgee::normalize_theta(Eigen::Vector3d::Zero()),
                      spgee::DegenerateDirectionError);
    REQUIRE_THROWS_AS(spgee::normalize_theta(Eigen::Vector3d(1e-13, -1e-13, 5e-14)),
                      spgee::DegenerateDirectionError);
  }
}

TEST_CASE("normalize_theta is idempotent and scale-free on random directions") {
  std::mt19937_64 gen(4242);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::VectorXd v(3 + rep % 4);
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = normal(gen);
    if (v.norm() <= 1e-10) continue;
    const Eigen::VectorXd u = spgee::normalize_theta(v);
    REQUIRE(spgee::theta_is_normalized(u));
    // Idempotent, and bit-identical under power-of-two rescaling of the input.
    REQUIRE(spgee::normalize_theta(u) == u);
    REQUIRE(spgee::normalize_theta(Eigen::VectorXd(4.0 * v)) == u);
    REQUIRE(spgee::normalize_theta(Eigen::VectorXd(-v)) == u);
  }
}

TEST_CASE("subject blocks sort rows by time and keep all columns aligned") {
  spgee::SubjectBlock s;
  s.id = "s";
  s.times = Eigen::Vector4d(3.0, 1.0, 2.0, 1.0);
  s.y = Eigen::Vector4d(30.0, 10.0, 20.0, 11.0);
  s.z.resize(4, 1);
  s.z << 3.0, 1.0, 2.0, 1.1;
  s.x.resize(4, 1);
  s.x << -3.0, -1.0, -2.0, -1.1;
  s.sort_by_time();
  REQUIRE(s.times[0] == 1.0);
  REQUIRE(s.times[3] == 3.0);
  // Stable for the duplicate time 1.0: original order preserved.
  REQUIRE(s.y[0] == 10.0);
  REQUIRE(s.y[1] == 11.0);
  REQUIRE(s.z(0, 0) == 1.0);
  REQUIRE(s.x(1, 0) == -1.1);
  REQUIRE(s.y[3] == 30.0);
}

TEST_CASE("dataset summaries: subject count, total observations, time domain") {
  const auto ds = small_dataset();
  REQUIRE(ds.n_subjects() == 3);
  REQUIRE(ds.total_obs() == 9);
  REQUIRE(ds.d() == 2);
  REQUIRE(ds.p() == 3);
  const auto [lo, hi] = ds.time_domain();
  REQUIRE(lo == 0.0);
  REQUIRE(hi == 5.0);
}

TEST_CASE("validate accepts a well-formed dataset") {
  const auto rep = spgee::validate(small_dataset());
  REQUIRE(rep.ok());
  REQUIRE(rep.notes.empty());
}

TEST_CASE("validate reports structural violations with the subject id") {
  SECTION("covariate block with the wrong shape") {
    auto ds = small_dataset();
    auto subjects = ds.subjects();
    subjects[1].z.resize(2, 1);  // should be 2x2
    subjects[1].z.setZero();
    const auto rep = spgee::validate(spgee::LongitudinalDataset(std::move(subjects), 2, 3));
    REQUIRE_FALSE(rep.ok());
    REQUIRE_THAT(rep.violations[0], ContainsSubstring("subject 'b'"));
    REQUIRE_THAT(rep.violations[0], ContainsSubstring("z"));
  }

  SECTION("non-finite response") {
    auto subjects = small_dataset().subjects();
    subjects[0].y[1] = std::numeric_limits<double>::quiet_NaN();
    const auto rep = spgee::validate(spgee::LongitudinalDataset(std::move(subjects), 2, 3));
    REQUIRE_FALSE(rep.ok());
    REQUIRE_THAT(rep.violations[0], ContainsSubstring("subject 'a'"));
    REQUIRE_THAT(rep.violations[0], ContainsSubstring("non-finite response"));
  }

  SECTION("times left unsorted") {
    auto subjects = small_dataset().subjects();
    std::swap(subjects[2].times[0], subjects[2].times[3]);
    const auto rep = spgee::validate(
        spgee::LongitudinalDataset(std::move(subjects), 2, 3, /*sort_times=*/false));
    REQUIRE_FALSE(rep.ok());
    bool mentions_sorting = false;
    for (const auto& v : rep.violations)
      if (v.find("not sorted") != std::string::npos) mentions_sorting = true;
    REQUIRE(mentions_sorting);
  }

  SECTION("subject without observations") {
    auto subjects = small_dataset().subjects();
    spgee::SubjectBlock empty;
    empty.id = "ghost";
    subjects.push_back(empty);
    const auto rep = spgee::validate(spgee::LongitudinalDataset(std::move(subjects), 2, 3));
    REQUIRE_FALSE(rep.ok());
    REQUIRE_THAT(rep.violations[0], ContainsSubstring("ghost"));
  }
}

TEST_CASE("validate flags duplicate observation times as a note, not a violation") {
  std::vector<spgee::SubjectBlock> subjects;
  subjects.push_back(make_block("dup", {1.0, 1.0, 2.0}, {0.1, 0.2, 0.3}, 1, 1, 7));
  const auto rep = spgee::validate(spgee::LongitudinalDataset(std::move(subjects), 1, 1));
  REQUIRE(rep.ok());
  REQUIRE(rep.notes.size() == 1);
  REQUIRE_THAT(rep.notes[0], ContainsSubstring("duplicate observation time"));
}

TEST_CASE("canonical observation order depends on content only") {
  const auto ds = small_dataset();
  auto shuffled = ds.subjects();
  std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
  const spgee::LongitudinalDataset ds2(std::move(shuffled), 2, 3);

  const auto order1 = spgee::canonical_observation_order(ds);
  const auto order2 = spgee::canonical_observation_order(ds2);
  REQUIRE(order1.size() == order2.size());
  for (std::size_t k = 0; k < order1.size(); ++k) {
    const auto& s1 = ds.subject(order1[k].first);
    const auto& s2 = ds2.subject(order2[k].first);
    REQUIRE(s1.times[order1[k].second] == s2.times[order2[k].second]);
    REQUIRE(s1.y[order1[k].second] == s2.y[order2[k].second]);
    REQUIRE(s1.z.row(order1[k].second) == s2.z.row(order2[k].second));
  }
  // Times are non-decreasing along the canonical order.
  for (std::size_t k = 1; k < order1.size(); ++k) {
    const double prev = ds.subject(order1[k - 1].first).times[order1[k - 1].second];
    const double cur = ds.subject(order1[k].first).times[order1[k].second];
    REQUIRE(prev <= cur);
  }
}

TEST_CASE("canonical subject order keys on the first observation") {
  const auto ds = small_dataset();
  auto shuffled = ds.subjects();
  std::swap(shuffled[0], shuffled[2]);
  const spgee::LongitudinalDataset ds2(std::move(shuffled), 2, 3);
  const auto order1 = spgee::canonical_subject_order(ds);
  const auto order2 = spgee::canonical_subject_order(ds2);
  for (std::size_t k = 0; k < order1.size(); ++k) {
    REQUIRE(ds.subject(order1[k]).id == ds2.subject(order2[k]).id);
  }
}

TEST_CASE("CSV save and load round-trips a dataset exactly") {
  const auto ds = small_dataset();
  const auto schema = spgee::default_schema(2, 3);
  const auto path = temp_csv_path("spgee_roundtrip");
  spgee::save_csv(path.string(), ds, schema);

  for (const bool use_auto : {false, true}) {
    const auto back = use_auto ? spgee::load_csv_auto(path.string())
                               : spgee::load_csv(path.string(), schema);
    REQUIRE(back.n_subjects() == ds.n_subjects());
    REQUIRE(back.d() == 2);
    REQUIRE(back.p() == 3);
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
      const auto& a = ds.subject(i);
      const auto& b = back.subject(i);
      REQUIRE(a.id == b.id);
      REQUIRE(a.times == b.times);
      REQUIRE(a.y == b.y);
      REQUIRE(a.z == b.z);
      REQUIRE(a.x == b.x);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("CSV loader reports malformed input precisely") {
  const auto path = temp_csv_path("spgee_badcsv");
  const auto write = [&path](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };

  SECTION("missing file") {
    REQUIRE_THROWS_AS(spgee::load_csv("/nonexistent/nowhere.csv", spgee::default_schema(1, 1)),
                      spgee::Error);
  }

  SECTION("empty file") {
    write("");
    REQUIRE_THROWS_AS(spgee::load_csv(path.string(), spgee::default_schema(1, 1)),
                      spgee::EmptyDatasetError);
  }

  SECTION("header but no rows") {
    write("subject,time,y,z1,x1\n");
    REQUIRE_THROWS_AS(spgee::load_csv(path.string(), spgee::default_schema(1, 1)),
                      spgee::EmptyDatasetError);
  }

  SECTION("missing required column") {
    write("subject,time,y,z1\n1,0,1,2\n");
    REQUIRE_THROWS_WITH(spgee::load_csv(path.string(), spgee::default_schema(1, 1)),
                        ContainsSubstring("x1"));
  }

  SECTION("unparsable cell names the row and column") {
    write("subject,time,y,z1,x1\ns1,0,1,2,3\ns1,1,oops,2,3\n");
    try {
      spgee::load_csv(path.string(), spgee::default_schema(1, 1));
      FAIL("expected ParseError");
    } catch (const spgee::ParseError& e) {
      REQUIRE_THAT(e.what(), ContainsSubstring("row 3"));
      REQUIRE_THAT(e.what(), ContainsSubstring("'y'"));
    }
  }

  SECTION("short row") {
    write("subject,time,y,z1,x1\ns1,0,1,2\n");
    REQUIRE_THROWS_AS(spgee::load_csv(path.string(), spgee::default_schema(1, 1)),
                      spgee::ParseError);
  }

  SECTION("auto-detection requires the default covariate names") {
    write("subject,time,y,cov1\ns1,0,1,2\n");
    REQUIRE_THROWS_AS(spgee::load_csv_auto(path.string()), spgee::SchemaError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("CSV loader groups interleaved subject rows and sorts by time") {
  const auto path = temp_csv_path("spgee_interleaved");
  {
    std::ofstream out(path);
    out << "subject,time,y,z1,x1\n";
    out << "a,2,20,1,1\n";
    out << "b,0,5,2,2\n";
    out << "a,1,10,3,3\n";
  }
  const auto ds = spgee::load_csv(path.string(), spgee::default_schema(1, 1));
  REQUIRE(ds.n_subjects() == 2);
  REQUIRE(ds.subject(0).id == "a");  // order of first appearance
  REQUIRE(ds.subject(0).times[0] == 1.0);
  REQUIRE(ds.subject(0).y[0] == 10.0);
  REQUIRE(ds.subject(0).z(0, 0) == 3.0);
  REQUIRE(ds.subject(1).id == "b");
  std::filesystem::remove(path);
}
