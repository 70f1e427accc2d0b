#include <cmath>

#include "doctest.h"
#include "pmix/error.hpp"
#include "pmix/poly_estimators.hpp"

using namespace pmix;

namespace {

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index d, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

// Kronecker delta tensor sum for x⊗I placements, used as an independent oracle.
DenseTensor gaussian_p2(const Eigen::VectorXd& x) {
  DenseTensor out = tensor_power(x, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) out.data[i * x.size() + i] -= 1.0;
  return out;
}

DenseTensor gaussian_p3(const Eigen::VectorXd& x) {
  const Eigen::Index d = x.size();
  DenseTensor out = tensor_power(x, 3);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b)
      for (Eigen::Index c = 0; c < d; ++c) {
        double v = 0.0;
        if (a == b) v += x[c];
        if (a == c) v += x[b];
        if (b == c) v += x[a];
        out.data[(a * d + b) * d + c] -= v;
      }
  return out;
}

std::vector<Eigen::VectorXd> draw_block(Rng& rng, std::size_t n, Eigen::Index d) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vec(rng, d));
  return out;
}

}  // namespace

TEST_CASE("gaussian base moments") {
  auto bm = base_moments(BaseDist::gaussian, 4, 2);
  CHECK(bm.order(2).data.isApprox(Eigen::Vector4d(1, 0, 0, 1)));
  CHECK(bm.order(3).data.cwiseAbs().maxCoeff() == 0.0);
  CHECK(bm.order(1).data.cwiseAbs().maxCoeff() == 0.0);
  auto one = base_moments(BaseDist::gaussian, 4, 1);
  CHECK(one.order(4).data[0] == doctest::Approx(3.0));
  CHECK(bm.order(4).at({0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(bm.order(4).at({0, 1, 0, 1}) == doctest::Approx(1.0));
  CHECK(bm.order(4).at({0, 0, 0, 1}) == 0.0);
  CHECK_THROWS_AS(base_moments(BaseDist::gaussian, 7, 2), Error);
  CHECK_THROWS_AS(parse_base_dist("cauchy"), Error);
}

TEST_CASE("gaussian pair-partition moments agree with univariate products") {
  auto pairs = base_moments(BaseDist::gaussian, 6, 2);
  for (std::size_t j = 1; j <= 6; ++j) {
    const auto& D = pairs.order(j);
    for (Eigen::Index lin = 0; lin < D.data.size(); ++lin) {
      auto idx = unflatten_index(static_cast<std::size_t>(lin), std::vector<std::size_t>(j, 2));
      unsigned c0 = 0;
      for (auto e : idx.entries) c0 += e == 0;
      double expect = coordinate_moment(BaseDist::gaussian, c0) *
                      coordinate_moment(BaseDist::gaussian, static_cast<unsigned>(j) - c0);
      CHECK(D.data[lin] == doctest::Approx(expect));
    }
  }
}

TEST_CASE("laplace and uniform second moments are the calibrated variances") {
  auto lap = base_moments(BaseDist::laplace, 4, 2);
  CHECK(lap.order(2).at({0, 0}) == doctest::Approx(2 * kLaplaceScale * kLaplaceScale));
  CHECK(lap.order(4).at({1, 1, 1, 1}) == doctest::Approx(24 * std::pow(kLaplaceScale, 4)));
  auto uni = base_moments(BaseDist::uniform_cube, 2, 2);
  CHECK(uni.order(2).at({1, 1}) == doctest::Approx(kUniformHalfWidth * kUniformHalfWidth / 3));
  CHECK(uni.order(2).at({0, 1}) == 0.0);
}

TEST_CASE("adjusted polynomial examples") {
  Rng rng(1, 0);
  for (Eigen::Index d = 1; d <= 3; ++d) {
    Eigen::VectorXd x = random_vec(rng, d);
    auto g = base_moments(BaseDist::gaussian, 4, d);
    CHECK(adjusted_poly_recursive(x, 1, g).data.isApprox(x));
    CHECK(adjusted_poly_recursive(x, 2, g).max_abs_diff(gaussian_p2(x)) < 1e-12);
    CHECK(adjusted_poly_recursive(x, 3, g).max_abs_diff(gaussian_p3(x)) < 1e-12);
    auto pm = base_moments(BaseDist::point_mass, 4, d);
    for (std::size_t t = 1; t <= 4; ++t)
      CHECK(adjusted_poly_recursive(x, t, pm).max_abs_diff(tensor_power(x, t)) == 0.0);
  }
  Eigen::VectorXd a(1);
  a << 1.7;
  auto g1 = base_moments(BaseDist::gaussian, 3, 1);
  CHECK(adjusted_poly_recursive(a, 3, g1).data[0] == doctest::Approx(1.7 * 1.7 * 1.7 - 3 * 1.7));
}

TEST_CASE("explicit formula matches the recursion") {
  Rng rng(2, 0);
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube, BaseDist::point_mass})
    for (Eigen::Index d = 1; d <= 3; ++d) {
      auto bm = base_moments(dist, 4, d);
      for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd x = random_vec(rng, d, 1.5);
        for (std::size_t t = 1; t <= 4; ++t)
          CHECK(adjusted_poly_explicit(x, t, bm).max_abs_diff(adjusted_poly_recursive(x, t, bm)) < 1e-10);
      }
    }
}

TEST_CASE("hermite tensors are the gaussian adjusted polynomials") {
  Rng rng(3, 0);
  Eigen::VectorXd x = random_vec(rng, 3);
  CHECK(hermite_tensor(x, 1).data.isApprox(x));
  CHECK(hermite_tensor(x, 2).max_abs_diff(gaussian_p2(x)) < 1e-12);
  for (Eigen::Index d = 1; d <= 3; ++d) {
    auto g = base_moments(BaseDist::gaussian, 5, d);
    for (int rep = 0; rep < 4; ++rep) {
      Eigen::VectorXd y = random_vec(rng, d, 2.0);
      for (std::size_t t = 1; t <= 5; ++t)
        CHECK(hermite_tensor(y, t).max_abs_diff(adjusted_poly_recursive(y, t, g)) < 1e-9);
    }
  }
}

TEST_CASE("univariate hermite recurrence and roots") {
  CHECK(hermite_univariate(5, 1) == 5);
  CHECK(hermite_univariate(0, 2) == -1);
  CHECK(hermite_univariate(2, 3) == doctest::Approx(2));
  for (std::size_t t = 1; t <= 12; ++t) {
    Eigen::VectorXd roots = hermite_roots(t);
    CHECK(roots.size() == static_cast<Eigen::Index>(t));
    for (Eigen::Index i = 0; i < roots.size(); ++i) {
      CHECK(std::abs(roots[i]) <= 2 * std::sqrt(static_cast<double>(t)));
      CHECK(std::abs(hermite_univariate(roots[i], t)) <= 1e-6 * std::pow(4.0 * t, t / 2.0));
    }
  }
  for (std::size_t t = 1; t <= 10; ++t) {
    double a = 20 * std::sqrt(static_cast<double>(t));
    CHECK(hermite_univariate(a, t) >= std::pow(0.9 * a, static_cast<double>(t)));
  }
}

TEST_CASE("rank-1 coefficients and subset weights") {
  CHECK(rank1_coefficient(1, 1) == Rational(1));
  CHECK(rank1_coefficient(3, 2) == Rational(-1, 2));
  CHECK(rank1_coefficient(4, 3) == Rational(1, 3));
  auto b2 = subset_sum_weights_exact(2);
  CHECK(b2[1] == Rational(2));
  CHECK(b2[2] == Rational(-1));
  CHECK_THROWS_AS(subset_sum_weights_exact(17), Error);
}

TEST_CASE("r_poly_terms structure") {
  Rng rng(4, 0);
  auto s1 = draw_block(rng, 2, 3);
  auto e1 = r_poly_terms(s1, 1);
  REQUIRE(e1.terms.size() == 2);
  CHECK(e1.terms[0].coeff == 1.0);
  CHECK(e1.terms[0].factors[0] == s1[0]);
  CHECK(e1.terms[1].coeff == -1.0);
  CHECK(e1.terms[1].factors[0] == s1[1]);

  auto s2 = draw_block(rng, 4, 2);
  auto e2 = r_poly_terms(s2, 2);
  REQUIRE(e2.terms.size() == 8);
  // symbolic oracle: x1x1 + x2x2 - x1x2 - x2x1 minus the same in x3, x4
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(4);
  auto outer = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return kron(a, b); };
  expect += outer(s2[0], s2[0]) + outer(s2[1], s2[1]) - outer(s2[0], s2[1]) - outer(s2[1], s2[0]);
  expect -= outer(s2[2], s2[2]) + outer(s2[3], s2[3]) - outer(s2[2], s2[3]) - outer(s2[3], s2[2]);
  CHECK((dense_sum(e2).data - expect).cwiseAbs().maxCoeff() < 1e-12);

  for (std::size_t t = 1; t <= 4; ++t) {
    auto e = r_poly_terms(draw_block(rng, 2 * t, 2), t);
    CHECK(e.terms.size() == 2 * static_cast<std::size_t>(std::pow(t, t)));
    for (const auto& term : e.terms) CHECK(term.factors.size() == t);
  }
  CHECK_THROWS_AS(r_poly_terms(draw_block(rng, 3, 2), 2), Error);
}

TEST_CASE("point mass substitution yields the mean power") {
  Rng rng(5, 0);
  for (std::size_t t = 1; t <= 4; ++t) {
    Eigen::VectorXd mu = random_vec(rng, 3);
    std::vector<Eigen::VectorXd> s(2 * t, Eigen::VectorXd::Zero(3));
    s[0] = mu;
    CHECK(dense_sum(r_poly_terms(s, t)).max_abs_diff(tensor_power(mu, t)) < 1e-12);
    CHECK(dense_sum(r_poly_symmetric(s, t)).max_abs_diff(tensor_power(mu, t)) < 1e-12);
  }
}

TEST_CASE("equal samples cancel") {
  Rng rng(6, 0);
  Eigen::VectorXd x = random_vec(rng, 3);
  for (std::size_t t = 1; t <= 4; ++t) {
    std::vector<Eigen::VectorXd> s(2 * t, x);
    CHECK(dense_sum(r_poly_terms(s, t)).data.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dense -Q_t + Q_t equals the rank-1 expansion") {
  Rng rng(8, 0);
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube})
    for (std::size_t t = 1; t <= 4; ++t)
      for (Eigen::Index d = 1; d <= 3; ++d) {
        auto bm = base_moments(dist, t, d);
        for (int rep = 0; rep < 3; ++rep) {
          auto s = draw_block(rng, 2 * t, d);
          CHECK(r_poly_dense_oracle(s, t, bm).max_abs_diff(dense_sum(r_poly_terms(s, t))) < 1e-9);
        }
      }
  Eigen::VectorXd a = Eigen::Vector3d(1, 2, 3), b = Eigen::Vector3d(-1, 0, 4);
  auto r1 = r_poly_dense_oracle({a, b}, 1, base_moments(BaseDist::gaussian, 1, 3));
  CHECK(r1.data.isApprox(a - b));
}

TEST_CASE("symmetric regrouping equals the labeled expansion") {
  Rng rng(9, 0);
  for (std::size_t t = 1; t <= 6; ++t)
    for (Eigen::Index d = 1; d <= 3; ++d) {
      auto s = draw_block(rng, 2 * t, d);
      auto sym = r_poly_symmetric(s, t);
      CHECK(sym.terms.size() == 2 * ((std::size_t{1} << t) - 1));
      double scale = std::pow(3.0 * std::sqrt(static_cast<double>(d)) * t, t);
      CHECK(dense_sum(sym).max_abs_diff(dense_sum(r_poly_terms(s, t))) < 1e-12 * scale);
    }
}

TEST_CASE("conditional mean of R_t given the first sample is P_t") {
  Rng rng(10, 0);
  const Eigen::Index d = 2;
  Eigen::VectorXd z1 = Eigen::Vector2d(0.8, -1.1);
  BaseSampler base(BaseDist::gaussian, d);
  auto bm = base_moments(BaseDist::gaussian, 3, d);
  for (std::size_t t = 1; t <= 3; ++t) {
    const int n = 40000;
    DenseTensor target = adjusted_poly_recursive(z1, t, bm);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(target.data.size());
    Eigen::VectorXd sq = sum;
    std::vector<Eigen::VectorXd> s(2 * t);
    for (int i = 0; i < n; ++i) {
      s[0] = z1;
      for (std::size_t j = 1; j < 2 * t; ++j) s[j] = base.draw(rng);
      Eigen::VectorXd r = dense_sum(r_poly_symmetric(s, t)).data;
      sum += r;
      sq += r.cwiseProduct(r);
    }
    Eigen::VectorXd mean = sum / n;
    Eigen::VectorXd se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    for (Eigen::Index e = 0; e < mean.size(); ++e) CHECK(std::abs(mean[e] - target.data[e]) <= 4 * se[e] + 1e-12);
  }
}

TEST_CASE("derivative recursion by central differences") {
  Rng rng(11, 0);
  const double h = 1e-4;
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace})
    for (Eigen::Index d = 1; d <= 3; ++d) {
      auto bm = base_moments(dist, 3, d);
      Eigen::VectorXd x = random_vec(rng, d);
      for (std::size_t t = 1; t <= 3; ++t)
        for (Eigen::Index i = 0; i < d; ++i) {
          Eigen::VectorXd xp = x, xm = x;
          xp[i] += h;
          xm[i] -= h;
          Eigen::VectorXd fd =
              (adjusted_poly_recursive(xp, t, bm).data - adjusted_poly_recursive(xm, t, bm).data) / (2 * h);
          Eigen::VectorXd ei = Eigen::VectorXd::Unit(d, i);
          DenseTensor lower = t == 1 ? DenseTensor::zeros(0, d) : adjusted_poly_recursive(x, t - 1, bm);
          if (t == 1) lower.data[0] = 1.0;
          Eigen::VectorXd expect = Eigen::VectorXd::Zero(fd.size());
          for (const auto& blocks : sym_interleavings({1, t - 1})) {
            std::vector<Eigen::VectorXd> f(t);
            // e_i at blocks[0], P_{t-1} entries across blocks[1]
            for (Eigen::Index lin = 0; lin < expect.size(); ++lin) {
              auto idx = unflatten_index(static_cast<std::size_t>(lin), std::vector<std::size_t>(t, d));
              Eigen::Index sub = 0;
              for (auto p : blocks[1]) sub = sub * d + static_cast<Eigen::Index>(idx.entries[p]);
              expect[lin] += ei[static_cast<Eigen::Index>(idx.entries[blocks[0][0]])] * lower.data[sub];
            }
          }
          double scale = std::max(1.0, expect.cwiseAbs().maxCoeff());
          CHECK((fd - expect).cwiseAbs().maxCoeff() <= 1e-5 * scale);
        }
    }
}

TEST_CASE("lower-bound kernel along a far direction") {
  Rng rng(12, 0);
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace})
    for (std::size_t t = 1; t <= 4; ++t) {
      auto bm = base_moments(dist, t, 3);
      for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd v = random_vec(rng, 3).normalized();
        double a = 200.0 * t * (1.0 + rng.uniform());
        Eigen::VectorXd x = random_vec(rng, 3, 50.0);
        x += (a - v.dot(x)) * v;
        double inner = adjusted_poly_recursive(x, t, bm).data.dot(tensor_power(v, t).data);
        CHECK(inner >= std::pow(0.9 * a, static_cast<double>(t)));
      }
    }
}

TEST_CASE("hermite mean under a shifted gaussian") {
  Rng rng(13, 0);
  Eigen::VectorXd mu = Eigen::Vector2d(0.7, -0.4);
  const int n = 100000;
  for (std::size_t t = 1; t <= 3; ++t) {
    Eigen::VectorXd target = tensor_power(mu, t).data;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(target.size()), sq = sum;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd z = mu + random_vec(rng, 2);
      Eigen::VectorXd h = t == 1 ? z : t == 2 ? gaussian_p2(z).data : gaussian_p3(z).data;
      sum += h;
      sq += h.cwiseProduct(h);
    }
    Eigen::VectorXd mean = sum / n;
    Eigen::VectorXd se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    for (Eigen::Index e = 0; e < mean.size(); ++e) CHECK(std::abs(mean[e] - target[e]) <= 4 * se[e]);
  }
}

TEST_CASE("hermite orthogonality and covariance bound") {
  Rng rng(14, 0);
  const Eigen::Index d = 3;
  {
    Eigen::VectorXd z = random_vec(rng, d);
    CHECK(hermite_tensor(z, 3).max_abs_diff(gaussian_p3(z)) < 1e-12);
  }
  const int n = 1000000;
  auto h = [](std::size_t t, const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return t == 1 ? z : t == 2 ? gaussian_p2(z).data : gaussian_p3(z).data;
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs{{1, 2}, {1, 3}, {2, 3}};
  std::vector<Eigen::MatrixXd> sum, sq;
  for (auto [a, b] : pairs) {
    auto ra = static_cast<Eigen::Index>(std::pow(d, a)), rb = static_cast<Eigen::Index>(std::pow(d, b));
    sum.push_back(Eigen::MatrixXd::Zero(ra, rb));
    sq.push_back(Eigen::MatrixXd::Zero(ra, rb));
  }
  std::vector<Eigen::MatrixXd> second(4);
  for (std::size_t t = 1; t <= 3; ++t) {
    auto r = static_cast<Eigen::Index>(std::pow(d, t));
    second[t] = Eigen::MatrixXd::Zero(r, r);
  }
  Eigen::MatrixXd block(d, 1);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z = random_vec(rng, d);
    Eigen::VectorXd hs[4] = {Eigen::VectorXd(), h(1, z), h(2, z), h(3, z)};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      Eigen::MatrixXd o = hs[pairs[p].first] * hs[pairs[p].second].transpose();
      sum[p] += o;
      sq[p] += o.cwiseProduct(o);
    }
    if (i < 200000)
      for (std::size_t t = 1; t <= 3; ++t) second[t].noalias() += hs[t] * hs[t].transpose();
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    Eigen::MatrixXd mean = sum[p] / n;
    Eigen::MatrixXd se = ((sq[p] / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    CHECK(((mean.cwiseAbs() - 5 * se).maxCoeff()) <= 0.0);
  }
  for (std::size_t t = 1; t <= 3; ++t) {
    Eigen::MatrixXd cov = second[t] / 200000.0;
    double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();
    double mc_error = std::sqrt(static_cast<double>(factorial(2 * t)) / 200000.0);
    CHECK(top <= static_cast<double>(factorial(t)) * (1 + 5 * mc_error));
  }
}
