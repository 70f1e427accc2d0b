#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace pmix {

// Chain of row-orthonormal stages; stage j maps R^{d * c_{j-1}} to R^{c_j},
// with c_0 = 1. Stage 1 consumes the last tensor factor.
class NestedProjection {
 public:
  NestedProjection() = default;
  explicit NestedProjection(Eigen::Index ambient_dim, std::vector<Eigen::MatrixXd> stages = {});

  // Identity stages I_{d^j}; only sensible for small d^s.
  static NestedProjection identity(Eigen::Index d, std::size_t stages);

  Eigen::Index ambient_dim() const { return d_; }
  std::size_t stage_count() const { return stages_.size(); }
  // c_s; 1 for the empty chain.
  Eigen::Index output_dim() const;
  Eigen::Index width(std::size_t j) const;
  const Eigen::MatrixXd& stage(std::size_t j) const { return stages_.at(j - 1); }
  const std::vector<Eigen::MatrixXd>& stages() const { return stages_; }

  // Copy with one more stage appended.
  NestedProjection extended(Eigen::MatrixXd next) const;
  // Copy with only the first s stages.
  NestedProjection prefix(std::size_t s) const;

  double max_orthonormality_error() const;

 private:
  void append(Eigen::MatrixXd stage);

  Eigen::Index d_ = 0;
  std::vector<Eigen::MatrixXd> stages_;
};

Eigen::VectorXd apply_rank1(const NestedProjection& np, std::span<const Eigen::VectorXd> factors);
// Γ flat(u^{⊗s}) without materializing the repeated factor list.
Eigen::VectorXd apply_power(const NestedProjection& np, const Eigen::VectorXd& u);
// Reusable buffers for many Γ flat(u^{⊗s}) evaluations on one chain.
class PowerEvaluator {
 public:
  explicit PowerEvaluator(const NestedProjection& np);
  // out[0..c_s) += weight * Γ flat(u^{⊗s})
  void accumulate(const double* u, double weight, double* out);
  // out[0..d c_s) = u ⊗ Γ flat(u^{⊗s})
  void lifted(const double* u, double* out);

  // Small chains keep a dense Γ; sums of weighted powers can then be projected once.
  bool dense() const { return !dense_.empty(); }
  std::size_t power_size() const { return power_.size(); }
  void add_power(const double* u, double weight, double* sum);
  void project_power(const double* sum, double* out) const;

 private:
  const double* run(const double* u);
  void fill_power(const double* u);

  const NestedProjection& np_;
  // Row-major copies of the stages.
  std::vector<std::vector<double>> rows_;
  std::vector<double> cur_, next_;
  // Small chains: row-major dense Γ and a buffer for flat(u^{⊗s}).
  std::vector<double> dense_, power_;
};

Eigen::VectorXd apply_kron_block(const NestedProjection& np, const Eigen::VectorXd& left,
                                 std::span<const Eigen::VectorXd> tail);
Eigen::MatrixXd dense_matrix(const NestedProjection& np);
double residual_norm(const NestedProjection& np, std::span<const Eigen::VectorXd> factors);

// Row orthonormalization that keeps the row span; throws on rank deficiency.
Eigen::MatrixXd orthonormalize_rows(const Eigen::MatrixXd& m);

void to_json(nlohmann::json& j, const NestedProjection& np);
void from_json(const nlohmann::json& j, NestedProjection& np);

}  // namespace pmix
