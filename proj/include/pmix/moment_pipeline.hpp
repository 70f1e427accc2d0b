#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmix/mixture.hpp"
#include "pmix/nested_projection.hpp"
#include "pmix/random.hpp"

namespace pmix {

enum class ExpansionMode {
  // Regrouped subset-sum form: 2(2^t - 1) symmetric terms per sample.
  subset_sum,
  // Term-by-term labeled expansion: 2 t^t terms per sample.
  labeled,
};

struct MomentOptions {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  int workers = 1;
  ExpansionMode mode = ExpansionMode::subset_sum;
};

struct MomentMatrixEstimate {
  Eigen::MatrixXd matrix;
  std::size_t samples_used = 0;
  std::size_t degree = 0;
};

MomentMatrixEstimate estimate_moment_matrix(const Sampler& mix, const Sampler& base, std::size_t s,
                                            const NestedProjection& prev, std::size_t n,
                                            const MomentOptions& opts = {});

Eigen::MatrixXd exact_moment_matrix(const MixtureSpec& spec, const NestedProjection& prev);

// Rows are orthonormal eigenvectors of the top-k eigenvalues by magnitude.
Eigen::MatrixXd top_k_subspace(const Eigen::MatrixXd& M, Eigen::Index k);

struct StageDiagnostics {
  std::size_t stage = 0;
  std::size_t samples_used = 0;
  Eigen::Index rank = 0;
  std::vector<double> leading_eigenvalues;
  double spectral_gap = 0.0;
};

struct ProjectionChain {
  NestedProjection np;
  std::vector<StageDiagnostics> stages;
};

struct ChainOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  ExpansionMode mode = ExpansionMode::subset_sum;
  std::function<void(const std::string&)> log;
};

// Stage 1 is the identity; stage s >= 2 is the top-`rank` subspace of the
// estimated degree-2s moment matrix. Each stage draws from its own streams.
ProjectionChain iterative_projection(const Sampler& mix, const Sampler& base, std::size_t t, Eigen::Index rank,
                                     std::size_t n_per_stage, const ChainOptions& opts = {});

// Same recursion driven by exact moment matrices.
ProjectionChain iterative_projection_exact(const MixtureSpec& spec, std::size_t t, Eigen::Index rank);

// Appends standard-normal coordinates up to `dim`.
class PaddedSampler final : public Sampler {
 public:
  PaddedSampler(const Sampler& inner, Eigen::Index dim);
  Eigen::Index dim() const override { return dim_; }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;

 private:
  const Sampler& inner_;
  Eigen::Index dim_;
};

void to_json(nlohmann::json& j, const StageDiagnostics& d);
void to_json(nlohmann::json& j, const ProjectionChain& chain);
void from_json(const nlohmann::json& j, ProjectionChain& chain);

}  // namespace pmix
