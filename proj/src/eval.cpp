#include "pmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmix/error.hpp"
#include "pmix/random.hpp"

namespace pmix {

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  if (n > m) fail(ErrorKind::shape, "hungarian needs rows <= cols");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials formulation, 1-based with a sentinel column 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      Eigen::Index i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = inf;
      for (Eigen::Index j = 1; j <= m; ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= m; ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(p[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> out(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) out[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = static_cast<std::size_t>(j - 1);
  return out;
}

MeanMatch match_means(const std::vector<Eigen::VectorXd>& truth, const std::vector<Eigen::VectorXd>& learned,
                      const std::vector<double>& truth_weights, const std::vector<double>& learned_weights) {
  MeanMatch out;
  out.to_learned.assign(truth.size(), kUnmatched);
  if (truth.empty()) {
    out.extra_learned = learned.size();
    return out;
  }
  const bool flip = truth.size() > learned.size();
  const auto& rows = flip ? learned : truth;
  const auto& cols = flip ? truth : learned;
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (rows[r] - cols[c]).squaredNorm();
  auto assign = hungarian(cost);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (flip) out.to_learned[assign[r]] = r;
    else out.to_learned[r] = assign[r];
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto j = out.to_learned[i];
    if (j == kUnmatched) {
      ++out.unmatched_truth;
      out.max_distance = std::numeric_limits<double>::infinity();
      continue;
    }
    out.max_distance = std::max(out.max_distance, (truth[i] - learned[j]).norm());
    if (!truth_weights.empty() && !learned_weights.empty())
      out.max_weight_error = std::max(out.max_weight_error, std::abs(truth_weights[i] - learned_weights[j]));
  }
  out.extra_learned = learned.size() > truth.size() ? learned.size() - truth.size() : 0;
  return out;
}

double clustering_accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& assigned) {
  if (truth.size() != assigned.size()) fail(ErrorKind::shape, "label vectors differ in length");
  if (truth.empty()) return 1.0;
  std::size_t kt = 0, ka = 0;
  for (auto x : truth) kt = std::max(kt, x + 1);
  for (auto x : assigned) ka = std::max(ka, x + 1);
  const std::size_t side = std::max(kt, ka);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(side), static_cast<Eigen::Index>(side));
  for (std::size_t i = 0; i < truth.size(); ++i) cost(static_cast<Eigen::Index>(truth[i]), static_cast<Eigen::Index>(assigned[i])) -= 1.0;
  auto match = hungarian(cost);
  double hits = 0.0;
  for (std::size_t r = 0; r < side; ++r) hits -= cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(match[r]));
  return hits / static_cast<double>(truth.size());
}

KMeansResult pca_kmeans(const std::vector<Eigen::VectorXd>& xs, std::size_t k, std::uint64_t seed, std::size_t iterations) {
  if (xs.empty()) fail(ErrorKind::empty_sample, "k-means needs samples");
  if (k < 1 || k > xs.size()) fail(ErrorKind::config, "k-means needs 1 <= k <= n");
  const Eigen::Index d = xs.front().size();
  const auto n = xs.size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : xs) cov.noalias() += (x - mean) * (x - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index r = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), d);
  Eigen::MatrixXd basis = es.eigenvectors().rightCols(r);
  std::vector<Eigen::VectorXd> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = basis.transpose() * (xs[i] - mean);

  Rng rng(seed, 0x4b4d45414e53);
  std::vector<Eigen::VectorXd> centers{ys[rng.below(n)]};
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (ys[i] - centers.back()).squaredNorm());
      total += dist[i];
    }
    double u = rng.uniform() * total;
    std::size_t pick = 0;
    for (double acc = 0.0; pick + 1 < n; ++pick) {
      acc += dist[pick];
      if (acc > u) break;
    }
    centers.push_back(ys[pick]);
  }
  std::vector<std::size_t> labels(n, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if ((ys[i] - centers[c]).squaredNorm() < (ys[i] - centers[best]).squaredNorm()) best = c;
      changed = changed || best != labels[i];
      labels[i] = best;
    }
    if (!changed) break;
    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(r));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[labels[i]] += ys[i];
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c]) centers[c] = sums[c] / static_cast<double>(counts[c]);
  }
  KMeansResult out;
  out.labels = labels;
  std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(d));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sums[labels[i]] += xs[i];
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c) out.centers.push_back(counts[c] ? Eigen::VectorXd(sums[c] / static_cast<double>(counts[c])) : mean);
  return out;
}

}  // namespace pmix
