#include "pmix/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pmix/error.hpp"

namespace pmix {

std::size_t flatten_index(const MultiIndex& idx) {
  if (idx.entries.size() != idx.dims.size())
    fail(ErrorKind::invalid_index, "entries/dims length mismatch");
  std::size_t linear = 0;
  for (std::size_t j = 0; j < idx.entries.size(); ++j) {
    if (idx.entries[j] >= idx.dims[j])
      fail(ErrorKind::invalid_index, "entry " + std::to_string(idx.entries[j]) + " out of range at axis " +
                                         std::to_string(j));
    linear = linear * idx.dims[j] + idx.entries[j];
  }
  return linear;
}

MultiIndex unflatten_index(std::size_t linear, const std::vector<std::size_t>& dims) {
  MultiIndex idx{std::vector<std::size_t>(dims.size()), dims};
  for (std::size_t j = dims.size(); j-- > 0;) {
    idx.entries[j] = linear % dims[j];
    linear /= dims[j];
  }
  if (linear != 0) fail(ErrorKind::invalid_index, "linear index outside the box");
  return idx;
}

Eigen::MatrixXd matricize_square(const Eigen::VectorXd& v, Eigen::Index m) {
  if (m < 0 || v.size() != m * m)
    fail(ErrorKind::shape, "vector of length " + std::to_string(v.size()) + " is not " + std::to_string(m) + "^2");
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = v[i * m + j];
  return out;
}

Eigen::Index Rank1Term::dim() const { return factors.empty() ? 0 : factors.front().size(); }

void Rank1Term::validate() const {
  if (factors.empty()) fail(ErrorKind::shape, "rank-1 term without factors");
  for (const auto& f : factors)
    if (f.size() != factors.front().size()) fail(ErrorKind::shape, "rank-1 factors differ in dimension");
}

Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

Eigen::VectorXd flatten(const Rank1Term& term) {
  term.validate();
  double entries = std::pow(static_cast<double>(term.dim()), static_cast<double>(term.order()));
  if (entries > 1e7) fail(ErrorKind::size_limit, "dense rank-1 flattening exceeds 1e7 entries");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(1, term.coeff);
  for (const auto& f : term.factors) out = kron(out, f);
  return out;
}

std::size_t LabeledPartition::ground_size() const {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  return n;
}

LabeledPartitions::LabeledPartitions(std::size_t t) : t_(t), word_(t, 0) {
  if (t == 0) done_ = true;
}

bool LabeledPartitions::next() {
  if (done_) return false;
  if (!started_) {
    started_ = true;
    return true;
  }
  for (std::size_t p = t_; p-- > 0;) {
    if (++word_[p] < t_) return true;
    word_[p] = 0;
  }
  done_ = true;
  return false;
}

LabeledPartition LabeledPartitions::partition() const {
  LabeledPartition out;
  out.parts.assign(t_, {});
  for (std::size_t p = 0; p < t_; ++p) out.parts[word_[p]].push_back(p);
  return out;
}

std::size_t LabeledPartitions::nonempty() const {
  std::vector<bool> seen(t_, false);
  std::size_t c = 0;
  for (auto s : word_)
    if (!seen[s]) {
      seen[s] = true;
      ++c;
    }
  return c;
}

std::vector<LabeledPartition> labeled_partitions(std::size_t t) {
  std::vector<LabeledPartition> out;
  LabeledPartitions stream(t);
  while (stream.next()) out.push_back(stream.partition());
  return out;
}

std::size_t count_nonempty(const LabeledPartition& p) {
  return static_cast<std::size_t>(
      std::count_if(p.parts.begin(), p.parts.end(), [](const IndexSet& s) { return !s.empty(); }));
}

namespace {

void grow_partitions(const IndexSet& S, std::size_t pos, std::size_t max_blocks, std::vector<IndexSet>& blocks,
                     std::vector<UnorderedPartition>& out) {
  if (pos == S.size()) {
    out.push_back({blocks});
    return;
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].push_back(S[pos]);
    grow_partitions(S, pos + 1, max_blocks, blocks, out);
    blocks[b].pop_back();
  }
  if (blocks.size() < max_blocks) {
    blocks.push_back({S[pos]});
    grow_partitions(S, pos + 1, max_blocks, blocks, out);
    blocks.pop_back();
  }
}

void grow_interleavings(const std::vector<std::size_t>& sizes, std::size_t pos, std::size_t total,
                        std::vector<IndexSet>& blocks, std::vector<std::vector<IndexSet>>& out) {
  if (pos == total) {
    out.push_back(blocks);
    return;
  }
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    if (blocks[b].size() == sizes[b]) continue;
    blocks[b].push_back(pos);
    grow_interleavings(sizes, pos + 1, total, blocks, out);
    blocks[b].pop_back();
  }
}

}  // namespace

std::vector<UnorderedPartition> unordered_partitions(const IndexSet& S, std::size_t t) {
  if (S.size() > kCombinatorialGuard)
    fail(ErrorKind::size_limit, "unordered partitions of a set larger than " + std::to_string(kCombinatorialGuard));
  std::vector<UnorderedPartition> out;
  std::vector<IndexSet> blocks;
  if (S.empty()) {
    out.push_back({});
    return out;
  }
  if (t == 0) return out;
  grow_partitions(S, 0, t, blocks, out);
  return out;
}

std::vector<std::vector<IndexSet>> sym_interleavings(const std::vector<std::size_t>& sizes) {
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total > kCombinatorialGuard)
    fail(ErrorKind::size_limit, "interleavings of total order above " + std::to_string(kCombinatorialGuard));
  std::vector<std::vector<IndexSet>> out;
  std::vector<IndexSet> blocks(sizes.size());
  grow_interleavings(sizes, 0, total, blocks, out);
  return out;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::uint64_t factorial(std::uint64_t n) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 2; i <= n; ++i) r *= i;
  return r;
}

}  // namespace pmix
