#include <cmath>

#include "doctest.h"
#include "pmix/error.hpp"
#include "pmix/nested_projection.hpp"
#include "pmix/random.hpp"
#include "pmix/tensor_core.hpp"

using namespace pmix;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index d) { return random_matrix(rng, d, 1).col(0); }

NestedProjection random_chain(Rng& rng, Eigen::Index d, Eigen::Index k, std::size_t s) {
  NestedProjection np(d);
  for (std::size_t j = 0; j < s; ++j) {
    Eigen::Index cols = d * np.output_dim();
    np = np.extended(orthonormalize_rows(random_matrix(rng, std::min(k, cols), cols)));
  }
  return np;
}

Eigen::VectorXd dense_flat(const std::vector<Eigen::VectorXd>& f) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (const auto& v : f) out = kron(out, v);
  return out;
}

}  // namespace

TEST_CASE("single identity stage returns the factor") {
  Rng rng(1, 0);
  auto np = NestedProjection::identity(3, 1);
  Eigen::VectorXd u = random_vec(rng, 3);
  std::vector<Eigen::VectorXd> f{u};
  CHECK(apply_rank1(np, f).isApprox(u));
  CHECK(residual_norm(np, f) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two-stage selector example") {
  Eigen::MatrixXd p1(1, 2), p2(1, 2);
  p1 << 1, 0;
  p2 << 1, 0;
  NestedProjection np(2, {p1, p2});
  Eigen::Vector2d u(2, 3), v(5, 7);
  std::vector<Eigen::VectorXd> f{u, v};
  // stage 1 takes the last factor: e1·v; stage 2 pairs with u: e1·u
  CHECK(apply_rank1(np, f)[0] == doctest::Approx(u[0] * v[0]));
  CHECK((dense_matrix(np) * dense_flat(f))[0] == doctest::Approx(u[0] * v[0]));
}

TEST_CASE("kron block examples") {
  Rng rng(2, 0);
  NestedProjection empty(3);
  Eigen::VectorXd u = random_vec(rng, 3);
  CHECK(apply_kron_block(empty, u, {}).isApprox(u));
  auto id = NestedProjection::identity(2, 1);
  Eigen::VectorXd a = random_vec(rng, 2), w = random_vec(rng, 2);
  std::vector<Eigen::VectorXd> tail{w};
  CHECK(apply_kron_block(id, a, tail).isApprox(kron(a, w)));

  auto np = random_chain(rng, 3, 2, 2);
  std::vector<Eigen::VectorXd> t2{random_vec(rng, 3), random_vec(rng, 3)};
  Eigen::MatrixXd G = dense_matrix(np);
  Eigen::MatrixXd IG = Eigen::MatrixXd::Zero(3 * G.rows(), 3 * G.cols());
  for (int i = 0; i < 3; ++i) IG.block(i * G.rows(), i * G.cols(), G.rows(), G.cols()) = G;
  Eigen::VectorXd expect = IG * kron(u, dense_flat(t2));
  CHECK((apply_kron_block(np, u, t2) - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lazy application equals dense materialization over the (d,k,s) grid") {
  Rng rng(3, 0);
  int cases = 0;
  for (Eigen::Index d : {1, 2, 3, 4, 5, 7, 10})
    for (Eigen::Index k : {1, 2, 3, 4})
      for (std::size_t s = 1; std::pow(d, s) <= 1e4 && s <= 8; ++s) {
        auto np = random_chain(rng, d, k, s);
        Eigen::MatrixXd G = dense_matrix(np);
        CHECK(G.rows() == np.output_dim());
        Eigen::MatrixXd gram = G * G.transpose();
        CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
        std::vector<Eigen::VectorXd> f;
        for (std::size_t j = 0; j < s; ++j) f.push_back(random_vec(rng, d));
        Eigen::VectorXd lazy = apply_rank1(np, f);
        CHECK((lazy - G * dense_flat(f)).cwiseAbs().maxCoeff() < 1e-10);
        double full = 1.0;
        for (const auto& v : f) full *= v.norm();
        CHECK(lazy.norm() <= full + 1e-9);
        double res = residual_norm(np, f);
        CHECK(std::abs(res * res + lazy.squaredNorm() - full * full) < 1e-9 * std::max(1.0, full * full));
        if (s >= 2) {
          auto prev = np.prefix(s - 1);
          std::vector<Eigen::VectorXd> tail(f.begin() + 1, f.end());
          Eigen::MatrixXd Gp = dense_matrix(prev);
          Eigen::VectorXd expect = kron(f[0], Gp * dense_flat(tail));
          CHECK((apply_kron_block(prev, f[0], tail) - expect).cwiseAbs().maxCoeff() < 1e-10);
        }
        Eigen::VectorXd u = random_vec(rng, d);
        std::vector<Eigen::VectorXd> same(s, u);
        CHECK((apply_power(np, u) - apply_rank1(np, same)).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, std::pow(u.norm(), s)));
        ++cases;
      }
  CHECK(cases > 40);
}

TEST_CASE("linearity over a five-term expansion") {
  Rng rng(4, 0);
  auto np = random_chain(rng, 3, 2, 3);
  Eigen::MatrixXd G = dense_matrix(np);
  Eigen::VectorXd lazy = Eigen::VectorXd::Zero(np.output_dim());
  Eigen::VectorXd dense = Eigen::VectorXd::Zero(27);
  for (int i = 0; i < 5; ++i) {
    double c = rng.normal();
    std::vector<Eigen::VectorXd> f{random_vec(rng, 3), random_vec(rng, 3), random_vec(rng, 3)};
    lazy += c * apply_rank1(np, f);
    dense += c * dense_flat(f);
  }
  CHECK((lazy - G * dense).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthogonal residual is the full norm") {
  Eigen::MatrixXd p(1, 2);
  p << 1, 0;
  NestedProjection np(2, {p});
  std::vector<Eigen::VectorXd> f{Eigen::Vector2d(0, 3)};
  CHECK(residual_norm(np, f) == doctest::Approx(3.0));
}

TEST_CASE("drifted stages are re-orthonormalized") {
  Rng rng(5, 0);
  Eigen::MatrixXd m = orthonormalize_rows(random_matrix(rng, 2, 3));
  m(0, 0) += 1e-6;
  NestedProjection np(3, {m});
  CHECK(np.max_orthonormality_error() < 1e-10);
  Eigen::MatrixXd dep(2, 3);
  dep << 1, 2, 3, 2, 4, 6;
  CHECK_THROWS_AS(NestedProjection(3, {dep}), Error);
  CHECK_THROWS_AS(NestedProjection(3, {Eigen::MatrixXd::Identity(2, 2)}), Error);
}

TEST_CASE("shape errors") {
  auto np = NestedProjection::identity(2, 2);
  std::vector<Eigen::VectorXd> one{Eigen::Vector2d(1, 0)};
  CHECK_THROWS_AS(apply_rank1(np, one), Error);
  std::vector<Eigen::VectorXd> bad{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(1, 0, 0)};
  CHECK_THROWS_AS(apply_rank1(np, bad), Error);
  Rng rng(9, 0);
  CHECK_THROWS_AS(dense_matrix(random_chain(rng, 11, 1, 4)), Error);
}

TEST_CASE("json round trip") {
  Rng rng(6, 0);
  auto np = random_chain(rng, 3, 2, 3);
  nlohmann::json j = np;
  auto back = j.get<NestedProjection>();
  REQUIRE(back.stage_count() == 3);
  for (std::size_t s = 1; s <= 3; ++s) CHECK(back.stage(s) == np.stage(s));
  j["version"] = 9;
  CHECK_THROWS_AS(j.get<NestedProjection>(), Error);
}
