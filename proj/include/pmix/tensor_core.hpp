#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace pmix {

using IndexSet = std::vector<std::size_t>;

struct MultiIndex {
  std::vector<std::size_t> entries;
  std::vector<std::size_t> dims;
};

// Row-major: the first axis is the most significant.
std::size_t flatten_index(const MultiIndex& idx);
MultiIndex unflatten_index(std::size_t linear, const std::vector<std::size_t>& dims);

Eigen::MatrixXd matricize_square(const Eigen::VectorXd& v, Eigen::Index m);

struct Rank1Term {
  double coeff = 1.0;
  std::vector<Eigen::VectorXd> factors;

  std::size_t order() const { return factors.size(); }
  Eigen::Index dim() const;
  void validate() const;
};

// Dense row-major flattening of coeff * factors[0] ⊗ ... ⊗ factors[t-1].
Eigen::VectorXd flatten(const Rank1Term& term);
Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct LabeledPartition {
  std::vector<IndexSet> parts;
  std::size_t ground_size() const;
};

// Streams the t^t assignments of [t] to t labeled slots in lexicographic
// order of the slot word (position 0 most significant).
class LabeledPartitions {
 public:
  explicit LabeledPartitions(std::size_t t);

  bool next();
  const std::vector<std::size_t>& slots() const { return word_; }
  LabeledPartition partition() const;
  std::size_t nonempty() const;

 private:
  std::size_t t_;
  std::vector<std::size_t> word_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<LabeledPartition> labeled_partitions(std::size_t t);
std::size_t count_nonempty(const LabeledPartition& p);

// Partitions of S into at most t nonempty blocks; empty parts are implicit.
struct UnorderedPartition {
  std::vector<IndexSet> blocks;
};

inline constexpr std::size_t kCombinatorialGuard = 12;

std::vector<UnorderedPartition> unordered_partitions(const IndexSet& S, std::size_t t);

// Position sets for every way to lay blocks of the given sizes onto
// [sum of sizes]; result[i][b] is the sorted position set of block b.
std::vector<std::vector<IndexSet>> sym_interleavings(const std::vector<std::size_t>& sizes);

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);
std::uint64_t factorial(std::uint64_t n);

}  // namespace pmix
