#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace pmix {

// Minimum-cost assignment of rows to columns (rows <= cols); result[r] is the column of row r.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

struct MeanMatch {
  // truth index -> learned index; npos when the truth component is unmatched.
  std::vector<std::size_t> to_learned;
  double max_distance = 0.0;
  double max_weight_error = 0.0;
  std::size_t unmatched_truth = 0;
  std::size_t extra_learned = 0;
};

inline constexpr std::size_t kUnmatched = static_cast<std::size_t>(-1);

MeanMatch match_means(const std::vector<Eigen::VectorXd>& truth, const std::vector<Eigen::VectorXd>& learned,
                      const std::vector<double>& truth_weights = {}, const std::vector<double>& learned_weights = {});

// Fraction of labels equal after the best relabeling of `assigned`.
double clustering_accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& assigned);

struct KMeansResult {
  std::vector<Eigen::VectorXd> centers;
  std::vector<std::size_t> labels;
};

// Projects onto the top-k principal directions, then Lloyd iterations with k-means++ seeding.
KMeansResult pca_kmeans(const std::vector<Eigen::VectorXd>& xs, std::size_t k, std::uint64_t seed,
                        std::size_t iterations = 100);

}  // namespace pmix
