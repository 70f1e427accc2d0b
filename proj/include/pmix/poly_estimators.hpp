#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pmix/mixture.hpp"
#include "pmix/tensor_core.hpp"

namespace pmix {

// Dense order-t tensor with side d, row-major.
struct DenseTensor {
  std::size_t order = 0;
  Eigen::Index side = 1;
  Eigen::VectorXd data = Eigen::VectorXd::Ones(1);

  static DenseTensor zeros(std::size_t order, Eigen::Index side);
  double at(const std::vector<std::size_t>& idx) const;
  double max_abs_diff(const DenseTensor& other) const;
};

inline constexpr double kDenseEntryGuard = 1e6;

struct BaseMoments {
  BaseDist dist = BaseDist::gaussian;
  Eigen::Index d = 0;
  std::vector<DenseTensor> moments;  // moments[j-1] = E[z^{⊗j}]

  const DenseTensor& order(std::size_t j) const { return moments.at(j - 1); }
};

BaseMoments base_moments(BaseDist dist, std::size_t t, Eigen::Index d);

DenseTensor tensor_power(const Eigen::VectorXd& x, std::size_t t);
DenseTensor adjusted_poly_recursive(const Eigen::VectorXd& x, std::size_t t, const BaseMoments& bm);
DenseTensor adjusted_poly_explicit(const Eigen::VectorXd& x, std::size_t t, const BaseMoments& bm);
DenseTensor hermite_tensor(const Eigen::VectorXd& x, std::size_t t);
double hermite_univariate(double a, std::size_t t);
Eigen::VectorXd hermite_roots(std::size_t t);

// Exact rational p/q with q > 0, reduced.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Rational operator+(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  Rational operator-() const { return Rational(-num, den); }
  bool operator==(const Rational& o) const = default;
};

// (-1)^{c-1} / binom(t-1, c-1)
Rational rank1_coefficient(std::size_t t, std::size_t c);

struct Rank1Expansion {
  std::size_t degree = 0;
  std::vector<Rank1Term> terms;
  std::size_t sample_block_size() const { return 2 * degree; }
};

Rank1Expansion r_poly_terms(const std::vector<Eigen::VectorXd>& samples, std::size_t t);

// Same polynomial regrouped by inclusion-exclusion over slot images:
// the x-block equals sum over nonempty W of b_{|W|} (sum_{j in W} x_j)^{⊗t}.
std::vector<Rational> subset_sum_weights_exact(std::size_t t);
// Cached double weights; index w in [1, t], entry 0 unused.
const std::vector<double>& subset_sum_weights(std::size_t t);

struct SymmetricTerm {
  double coeff = 0.0;
  Eigen::VectorXd u;
};

struct SymmetricExpansion {
  std::size_t degree = 0;
  std::vector<SymmetricTerm> terms;
};

SymmetricExpansion r_poly_symmetric(const std::vector<Eigen::VectorXd>& samples, std::size_t t);

// Calls fn(weight, u) for every term of the symmetric form, with samples the
// 2t columns of block. Subset sums are updated incrementally in Gray order.
template <class Fn>
void for_each_symmetric_term(const Eigen::MatrixXd& block, std::size_t t, Fn&& fn);

DenseTensor dense_sum(const Rank1Expansion& e);
DenseTensor dense_sum(const SymmetricExpansion& e);

DenseTensor r_poly_dense_oracle(const std::vector<Eigen::VectorXd>& samples, std::size_t t, const BaseMoments& bm);

template <class Fn>
void for_each_symmetric_term(const Eigen::MatrixXd& block, std::size_t t, Fn&& fn) {
  const auto& b = subset_sum_weights(t);
  const Eigen::Index d = block.rows();
  Eigen::VectorXd left = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd right = Eigen::VectorXd::Zero(d);
  std::size_t prev = 0;
  std::size_t size = 0;
  for (std::size_t i = 1; i < (std::size_t{1} << t); ++i) {
    std::size_t gray = i ^ (i >> 1);
    std::size_t flipped = gray ^ prev;
    std::size_t j = static_cast<std::size_t>(__builtin_ctzll(flipped));
    if (gray & flipped) {
      left += block.col(static_cast<Eigen::Index>(j));
      right += block.col(static_cast<Eigen::Index>(t + j));
      ++size;
    } else {
      left -= block.col(static_cast<Eigen::Index>(j));
      right -= block.col(static_cast<Eigen::Index>(t + j));
      --size;
    }
    prev = gray;
    fn(b[size], left);
    fn(-b[size], right);
  }
}

}  // namespace pmix
