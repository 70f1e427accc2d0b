#include <cmath>

#include "doctest.h"
#include "pmix/error.hpp"
#include "pmix/sample_test.hpp"

using namespace pmix;

namespace {

// Difference mixture of `spec`: weights w_i w_j on (mu_i - mu_j)/sqrt(2), same-component pairs merged at 0.
MixtureSpec difference_oracle(const MixtureSpec& spec) {
  MixtureSpec out;
  out.base = spec.base;
  double same = 0.0;
  for (double w : spec.weights) same += w * w;
  out.weights.push_back(same);
  out.means.push_back(Eigen::VectorXd::Zero(spec.dim()));
  for (std::size_t i = 0; i < spec.k(); ++i)
    for (std::size_t j = 0; j < spec.k(); ++j)
      if (i != j) {
        out.weights.push_back(spec.weights[i] * spec.weights[j]);
        out.means.push_back((spec.means[i] - spec.means[j]) / std::sqrt(2.0));
      }
  return out;
}

MixtureSpec axis_spec(std::size_t k, double sep, BaseDist base) {
  MixtureSpec spec;
  spec.base = base;
  for (std::size_t i = 0; i < k; ++i) {
    spec.weights.push_back(1.0 / static_cast<double>(k));
    spec.means.push_back(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) * sep /
                         std::sqrt(2.0));
  }
  return spec;
}

TestConfig fixed_tau(std::size_t t, double tau, std::size_t reps = 64) {
  TestConfig cfg;
  cfg.t = t;
  cfg.tau = tau;
  cfg.reps = reps;
  return cfg;
}

}  // namespace

TEST_CASE("point-mass base statistics") {
  Eigen::VectorXd mu = Eigen::Vector3d(1.0, -2.0, 0.5);
  MixtureSpec spec{{1.0}, {mu}, BaseDist::point_mass};
  auto chain = iterative_projection_exact(spec, 3, 1);
  BaseSampler base(BaseDist::point_mass, 3);

  auto zero = test_sample(Eigen::VectorXd::Zero(3), chain, fixed_tau(3, 1.0), base, Rng(1, 0));
  CHECK(zero.statistic == 0.0);
  CHECK(zero.label == Label::close);

  auto at_mean = test_sample(mu, chain, fixed_tau(3, 1.0), base, Rng(1, 0));
  CHECK(at_mean.statistic == doctest::Approx(std::pow(mu.norm(), 3)).epsilon(1e-10));
  CHECK(at_mean.label == Label::far);

  SUBCASE("scale coupling") {
    for (double c : {-2.0, -0.5, 0.3, 3.0}) {
      auto scaled = test_sample(c * mu, chain, fixed_tau(3, 1.0), base, Rng(1, 0));
      CHECK(scaled.statistic == doctest::Approx(std::pow(std::abs(c), 3) * at_mean.statistic).epsilon(1e-10));
    }
  }
}

TEST_CASE("labeled and subset-sum modes agree") {
  auto spec = axis_spec(3, 6.0, BaseDist::gaussian);
  auto chain = iterative_projection_exact(spec, 3, 3);
  BaseSampler base(BaseDist::gaussian, 3);
  Rng zr(3, 0);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd z = base.draw(zr) + spec.means[static_cast<std::size_t>(rep) % 3];
    auto cfg = fixed_tau(3, 10.0, 8);
    auto fast = test_sample(z, chain, cfg, base, Rng(4, static_cast<std::uint64_t>(rep)));
    cfg.mode = ExpansionMode::labeled;
    auto slow = test_sample(z, chain, cfg, base, Rng(4, static_cast<std::uint64_t>(rep)));
    CHECK(std::abs(fast.statistic - slow.statistic) <= 1e-9 * std::max(1.0, slow.statistic));
  }
}

TEST_CASE("verdicts are deterministic and monotone in tau") {
  auto spec = axis_spec(3, 6.0, BaseDist::laplace);
  auto chain = iterative_projection_exact(spec, 2, 3);
  BaseSampler base(BaseDist::laplace, 3);
  Eigen::VectorXd z = Eigen::Vector3d(0.7, -0.1, 0.4);
  auto a = test_sample(z, chain, fixed_tau(2, 1.0), base, Rng(8, 2));
  auto b = test_sample(z, chain, fixed_tau(2, 1.0), base, Rng(8, 2));
  CHECK(a.statistic == b.statistic);
  for (double tau : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
    auto lo = test_sample(z, chain, fixed_tau(2, tau), base, Rng(8, 2));
    auto hi = test_sample(z, chain, fixed_tau(2, 2 * tau), base, Rng(8, 2));
    CHECK(lo.statistic == hi.statistic);
    CHECK((lo.label == Label::far) == (lo.statistic >= tau));
    if (lo.label == Label::close) CHECK(hi.label == Label::close);
  }
}

TEST_CASE("gaussian noise stays below the zero-length bound") {
  // k = d = 4, t = 3, tau = (2t)^{t/2} k / delta with delta = 0.05.
  auto spec = axis_spec(4, 10.0, BaseDist::gaussian);
  auto chain = iterative_projection_exact(spec, 3, 4);
  BaseSampler base(BaseDist::gaussian, 4);
  const double tau = std::pow(6.0, 1.5) * 4.0 / 0.05;
  CHECK(zero_length_bound(3, 4, 0.05, Variant::gaussian) == doctest::Approx(tau));
  Rng zr(11, 0);
  int close = 0;
  for (int i = 0; i < 400; ++i) {
    auto v = test_sample(base.draw(zr), chain, fixed_tau(3, tau), base, Rng(12, static_cast<std::uint64_t>(i)));
    close += v.label == Label::close;
  }
  MESSAGE("close " << close << " / 400");
  CHECK(close >= 380);
}

TEST_CASE("choose_threshold and gates") {
  CHECK(choose_threshold(10.0, 2) == doctest::Approx(4.0));
  CHECK(choose_threshold(5.0, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(choose_threshold(0.0, 2), Error);
  // (0.2 sep)^t against (2t)^{t/2} k / delta, evaluated directly.
  for (std::size_t t = 1; t <= 8; ++t)
    for (double sep : {10.0, 40.0, 200.0}) {
      double lhs = std::pow(0.2 * sep, static_cast<double>(t));
      double rhs = std::pow(2.0 * static_cast<double>(t), static_cast<double>(t) / 2.0) * 4.0 / 0.05;
      CHECK(threshold_feasible(choose_threshold(sep, t), t, 4, 0.05, Variant::gaussian) == (lhs >= rhs));
      auto cfg = make_test_config(sep, t, 4, 0.05, 64, Variant::gaussian);
      CHECK(cfg.guarantee_void == (lhs < rhs));
    }
  CHECK(zero_length_bound(2, 3, 0.1, Variant::poincare) == doctest::Approx(1600.0 * 3 / 0.1));
}

TEST_CASE("choose_degree examples") {
  // K = e^10, sep = 2 ln K.
  auto capped = choose_degree(20.0, 1, std::exp(-10.0), 1.0, Variant::poincare);
  CHECK(capped.uncapped == 145);
  CHECK(capped.t == kMaxDegree);
  CHECK(capped.capped);

  // sep / ln K = K^10 with K = 2.
  auto one = choose_degree(std::log(2.0) * 1024.0, 2, 1.0, 1.0, Variant::poincare);
  CHECK(one.t == 1);
  CHECK_FALSE(one.capped);

  CHECK_THROWS_AS(choose_degree(std::log(50.0), 5, 0.2, 0.5, Variant::poincare), Error);
  try {
    choose_degree(1.0, 5, 0.2, 0.5, Variant::poincare);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::separation_too_small);
  }

  SUBCASE("minimality against direct evaluation") {
    for (double sep : {30.0, 60.0, 120.0})
      for (auto variant : {Variant::poincare, Variant::gaussian}) {
        double K = 3.0 / (0.2 * 0.05);
        double ratio = variant == Variant::poincare ? sep / std::log(K) : sep / std::sqrt(std::log(K));
        auto c = choose_degree(sep, 3, 0.2, 0.05, variant);
        double t = static_cast<double>(c.uncapped);
        CHECK(t * std::log(ratio) >= 10 * std::log(K) - 1e-9);
        if (c.uncapped > 1) CHECK((t - 1) * std::log(ratio) < 10 * std::log(K));
      }
  }
}

TEST_CASE("pair_test on point-mass components") {
  Eigen::VectorXd mu = Eigen::Vector3d(3.0, 1.0, -2.0);
  MixtureSpec spec{{0.5, 0.5}, {Eigen::VectorXd::Zero(3), mu}, BaseDist::point_mass};
  auto diff = difference_oracle(spec);
  auto chain = iterative_projection_exact(diff, 3, 1);
  BaseSampler base(BaseDist::point_mass, 3);
  auto cfg = fixed_tau(3, choose_threshold(mu.norm(), 3), 4);
  const std::vector<Eigen::VectorXd> pts{Eigen::VectorXd::Zero(3), mu};
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      auto r = pair_test(pts[a], pts[b], chain, cfg, base, Rng(5, 0));
      CHECK(r.accept == (a == b));
      auto s = pair_test(pts[b], pts[a], chain, cfg, base, Rng(5, 0));
      CHECK(r.verdict.statistic == doctest::Approx(s.verdict.statistic));
    }
  auto same = pair_test(mu, mu, chain, cfg, base, Rng(5, 0));
  CHECK(same.verdict.statistic == 0.0);
}

TEST_CASE("pair_test error rates on a gaussian mixture") {
  // k = d = 4, sep = 12, t = 3, reps = 64.
  auto spec = axis_spec(4, 12.0, BaseDist::gaussian);
  auto chain = iterative_projection_exact(difference_oracle(spec), 3, 6);
  MixtureSampler mix(spec);
  BaseSampler base(BaseDist::gaussian, 4);
  auto cfg = make_test_config(12.0, 3, 4, 0.05, 64, Variant::gaussian);
  Rng rng(21, 0);
  int same_total = 0, same_accept = 0, cross_total = 0, cross_reject = 0;
  Eigen::VectorXd z(4), zp(4);
  std::uint64_t id = 0;
  while (same_total < 400 || cross_total < 400) {
    auto a = mix.draw_labeled(rng, z);
    auto b = mix.draw_labeled(rng, zp);
    if ((a == b && same_total >= 400) || (a != b && cross_total >= 400)) continue;
    auto r = pair_test(z, zp, chain, cfg, base, Rng(22, id++));
    if (a == b) {
      ++same_total;
      same_accept += r.accept;
    } else {
      ++cross_total;
      cross_reject += !r.accept;
    }
  }
  MESSAGE("same " << same_accept << "/" << same_total << " cross " << cross_reject << "/" << cross_total);
  CHECK(same_accept >= 0.95 * same_total);
  CHECK(cross_reject >= 0.95 * cross_total);
}

TEST_CASE("shape and config errors") {
  auto spec = axis_spec(2, 6.0, BaseDist::gaussian);
  auto chain = iterative_projection_exact(spec, 2, 2);
  BaseSampler base(BaseDist::gaussian, 2);
  CHECK_THROWS_AS(test_sample(Eigen::VectorXd::Zero(3), chain, fixed_tau(2, 1.0), base, Rng(0, 0)), Error);
  CHECK_THROWS_AS(test_sample(Eigen::VectorXd::Zero(2), chain, fixed_tau(3, 1.0), base, Rng(0, 0)), Error);
  CHECK_THROWS_AS(test_sample(Eigen::VectorXd::Zero(2), chain, fixed_tau(2, 1.0, 0), base, Rng(0, 0)), Error);
  CHECK_THROWS_AS(test_sample(Eigen::VectorXd::Zero(2), chain, fixed_tau(2, -1.0), base, Rng(0, 0)), Error);
}

TEST_CASE("verdict json") {
  TestVerdict v;
  v.label = Label::far;
  v.statistic = 2.5;
  v.tau = 1.0;
  v.t = 3;
  v.reps = 64;
  v.seed = 7;
  nlohmann::json j = v;
  CHECK(j["label"] == "Far");
  CHECK(j["statistic"] == 2.5);
  CHECK(j["seed"] == 7);
  CHECK_FALSE(j.contains("guarantee_void"));
  v.guarantee_void = true;
  j = v;
  CHECK(j["guarantee_void"] == true);
}
