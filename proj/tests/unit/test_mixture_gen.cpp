#include <cmath>
#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "pmix/error.hpp"
#include "pmix/mixture_gen.hpp"

using namespace pmix;

namespace {

GenConfig uniform_cfg(std::size_t k, Eigen::Index d, double sep, std::uint64_t seed) {
  GenConfig cfg;
  cfg.k = k;
  cfg.d = d;
  cfg.sep = sep;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("build_spec placement") {
  auto one = build_spec(uniform_cfg(1, 3, 10.0, 0));
  CHECK(one.means[0].norm() == 0.0);
  CHECK(one.weights[0] == 1.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto two = build_spec(uniform_cfg(2, 3, 10.0, seed));
    double dist = (two.means[0] - two.means[1]).norm();
    CHECK(dist >= 10.0 - 1e-9);
    CHECK(dist <= 12.0 + 1e-9);
    auto five = build_spec(uniform_cfg(5, 4, 7.0, seed));
    CHECK(five.min_separation() >= 7.0 - 1e-9);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) CHECK((five.means[i] - five.means[j]).norm() <= 8.4 + 1e-9);
  }

  SUBCASE("hierarchical") {
    GenConfig cfg = uniform_cfg(4, 5, 0.0, 3);
    cfg.separation = SeparationProfile::hierarchical;
    cfg.level_separations = {10.0, 500.0};
    auto spec = build_spec(cfg);
    // Groups are {0, 1} and {2, 3}.
    for (auto [a, b] : {std::pair{0, 1}, std::pair{2, 3}}) {
      double dist = (spec.means[a] - spec.means[b]).norm();
      CHECK(dist >= 10.0 - 1e-9);
      CHECK(dist <= 12.0 + 1e-9);
    }
    for (int a : {0, 1})
      for (int b : {2, 3}) {
        double dist = (spec.means[a] - spec.means[b]).norm();
        CHECK(dist >= 500.0 - 24.0);
        CHECK(dist <= 600.0 + 24.0);
      }
  }

  SUBCASE("infeasible placement") {
    try {
      build_spec(uniform_cfg(3, 1, 10.0, 0));
      FAIL("expected placement error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::placement);
    }
  }

  SUBCASE("weights") {
    GenConfig cfg = uniform_cfg(3, 3, 10.0, 1);
    cfg.weighting = WeightProfile::fixed;
    cfg.weights = {0.5, 0.3, 0.2};
    auto spec = build_spec(cfg);
    CHECK(spec.weights[1] == doctest::Approx(0.3));
    cfg.weights = {0.5, 0.3, 0.3};
    CHECK_THROWS_AS(build_spec(cfg), Error);
    cfg.weighting = WeightProfile::dirichlet;
    spec = build_spec(cfg);
    double total = 0.0;
    for (double w : spec.weights) total += w;
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("seed determinism") {
  auto a = build_spec(uniform_cfg(4, 4, 10.0, 77));
  auto b = build_spec(uniform_cfg(4, 4, 10.0, 77));
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.means[i] == b.means[i]);
  auto s1 = sample_stream(a, 5).take(100);
  auto s2 = sample_stream(a, 5);
  for (std::size_t i = 0; i < 100; ++i) {
    auto x = s2.next();
    CHECK(x.x == s1[i].x);
    CHECK(x.label == s1[i].label);
  }
  CHECK(sample_stream(a, 5).at(42).x == s1[42].x);
}

TEST_CASE("sample_stream statistics") {
  SUBCASE("point mass") {
    MixtureSpec spec{{0.3, 0.7}, {Eigen::Vector2d(1, 2), Eigen::Vector2d(-3, 0)}, BaseDist::point_mass};
    auto st = sample_stream(spec, 0);
    for (int i = 0; i < 200; ++i) {
      auto s = st.next();
      CHECK(s.x == spec.means[s.label]);
    }
  }
  SUBCASE("empirical weights and covariance") {
    GenConfig cfg = uniform_cfg(3, 3, 10.0, 2);
    cfg.weighting = WeightProfile::fixed;
    cfg.weights = {0.2, 0.3, 0.5};
    auto spec = build_spec(cfg);
    auto st = sample_stream(spec, 9);
    const std::size_t n = 100000;
    std::vector<std::size_t> counts(3, 0);
    std::vector<Eigen::Matrix3d> scatter(3, Eigen::Matrix3d::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      auto s = st.next();
      ++counts[s.label];
      Eigen::VectorXd c = s.x - spec.means[s.label];
      scatter[s.label] += c * c.transpose();
    }
    for (std::size_t i = 0; i < 3; ++i) {
      double w = spec.weights[i];
      CHECK(std::abs(static_cast<double>(counts[i]) / n - w) <= 4 * std::sqrt(w / n));
      Eigen::Matrix3d cov = scatter[i] / static_cast<double>(counts[i]);
      // Entry standard errors are at most sqrt(2 / n_i).
      CHECK((cov - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 4 * std::sqrt(2.0 / counts[i]));
    }
  }
}

TEST_CASE("base_sampler moments") {
  const std::size_t n = 1000000;
  for (const char* tag : {"gaussian", "laplace", "uniform_cube"}) {
    auto st = base_sampler(tag, 3, 4);
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    Eigen::Vector3d sq = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd x = st.next();
      sum += x;
      sq += x.cwiseProduct(x);
    }
    Eigen::Vector3d mean = sum / n;
    CHECK(mean.cwiseAbs().maxCoeff() <= 4.0 / std::sqrt(static_cast<double>(n)));
    BaseDist dist = parse_base_dist(tag);
    double var = coordinate_variance(dist);
    double fourth = coordinate_moment(dist, 4);
    double se = std::sqrt((fourth - var * var) / n);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(sq[c] / n - var) <= 4 * se);
  }
  // Two-sided exponential with scale b: variance 2 b^2.
  CHECK(coordinate_variance(BaseDist::laplace) == doctest::Approx(2 * 0.25));
  auto pm = base_sampler("point_mass", 4, 0);
  for (int i = 0; i < 10; ++i) CHECK(pm.next().isZero(0.0));
  try {
    base_sampler("cauchy", 2, 0);
    FAIL("expected unsupported distribution");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported_distribution);
  }
}

TEST_CASE("poincare smoke test on linear functions") {
  const std::size_t n = 20000;
  Rng dirs(31, 0);
  for (auto dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube}) {
    BaseStream st(dist, 3, 8);
    std::vector<Eigen::VectorXd> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(st.next());
    for (int f = 0; f < 50; ++f) {
      Eigen::Vector3d a(dirs.normal(), dirs.normal(), dirs.normal());
      double s1 = 0, s2 = 0, s4 = 0;
      for (const auto& x : xs) {
        double v = a.dot(x);
        s1 += v;
        s2 += v * v;
      }
      double mean = s1 / n;
      double var = s2 / n - mean * mean;
      for (const auto& x : xs) s4 += std::pow(a.dot(x) - mean, 4);
      double se = std::sqrt((s4 / n - var * var) / n);
      CHECK(var <= a.squaredNorm() + 4 * se);
    }
  }
}

TEST_CASE("exponential tails of lipschitz functions") {
  const std::size_t n = 200000;
  Rng dirs(32, 0);
  for (auto dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube}) {
    BaseStream st(dist, 3, 9);
    std::vector<Eigen::VectorXd> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(st.next());
    for (int f = 0; f < 5; ++f) {
      Eigen::Vector3d a(dirs.normal(), dirs.normal(), dirs.normal());
      a.normalize();
      for (double tau : {2.0, 4.0, 8.0}) {
        std::size_t hits = 0;
        for (const auto& x : xs) hits += std::abs(a.dot(x)) >= tau;
        double bound = 6 * std::exp(-tau);
        double p = static_cast<double>(hits) / n;
        CHECK(p <= bound + 4 * std::sqrt(bound * (1 - std::min(bound, 1.0)) / n) + 1.0 / n);
      }
    }
  }
}

TEST_CASE("csv and json round trips") {
  MixtureSpec spec{{0.25, 0.75}, {Eigen::Vector2d(0.1, 1.0 / 3.0), Eigen::Vector2d(-7, 2e-17)}, BaseDist::laplace};
  auto samples = sample_stream(spec, 3).take(20);
  std::ostringstream csv;
  write_samples_csv(csv, samples);
  CHECK(csv.str().rfind("id,x_0,x_1,label\n", 0) == 0);
  std::string path = "pmix_test_samples.csv";
  write_samples_csv(path, samples);
  bool labeled = false;
  auto back = read_samples_csv(path, &labeled);
  std::remove(path.c_str());
  CHECK(labeled);
  REQUIRE(back.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(back[i].x == samples[i].x);
    CHECK(back[i].label == samples[i].label);
  }

  nlohmann::json j = spec;
  MixtureSpec spec2 = j.get<MixtureSpec>();
  CHECK(spec2.means[0] == spec.means[0]);
  CHECK(spec2.base == BaseDist::laplace);
  j["extra"] = 1;
  CHECK_THROWS_AS(j.get<MixtureSpec>(), Error);

  GenConfig cfg = uniform_cfg(4, 16, 0.0, 9);
  cfg.separation = SeparationProfile::hierarchical;
  cfg.level_separations = {10.0, 1000.0};
  nlohmann::json gj = cfg;
  GenConfig cfg2 = gj.get<GenConfig>();
  CHECK(cfg2.level_separations == cfg.level_separations);
  CHECK(cfg2.d == 16);
  gj["separation"]["sigma"] = 2;
  CHECK_THROWS_AS(gj.get<GenConfig>(), Error);
}
