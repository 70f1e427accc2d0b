#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmix/mixture.hpp"
#include "pmix/moment_pipeline.hpp"
#include "pmix/sample_test.hpp"

namespace pmix {

// Draws (z - z') / sqrt(2) from two independent draws of `inner`.
class DifferenceSampler final : public Sampler {
 public:
  explicit DifferenceSampler(const Sampler& inner) : inner_(inner) {}
  Eigen::Index dim() const override { return inner_.dim(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;

 private:
  const Sampler& inner_;
};

// Exact difference mixture: weight sum w_i^2 at the origin, w_i w_j at (mu_i - mu_j)/sqrt(2).
MixtureSpec difference_spec(const MixtureSpec& spec);

// Rank needed to capture the difference directions: max(1, k(k-1)/2).
Eigen::Index difference_rank(std::size_t k);

struct LearnedMixture {
  std::vector<Eigen::VectorXd> means;
  std::vector<double> weights;
  std::size_t t = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double band = 0.0;
  double ambiguous_fraction = 0.0;
  bool degree_capped = false;
  bool guarantee_void = false;
  std::vector<std::string> warnings;

  std::size_t k() const { return means.size(); }
};

struct VoteLedger {
  std::vector<Eigen::VectorXd> candidates;
  std::vector<std::size_t> accepted_counts;
  std::vector<std::size_t> support;
  std::vector<std::size_t> accepted;
};

struct PoincareOptions {
  std::size_t k = 1;
  double w_min = 0.1;
  double sep = 10.0;
  double alpha = 1.0;
  double c = 0.5;
  double delta = 0.05;
  Variant variant = Variant::poincare;
  // 0 picks the degree by choose_degree (capped).
  std::size_t t = 3;
  std::size_t reps = 64;
  std::size_t n_per_stage = 20000;
  // 0 means the defaults 20 k / w_min, 50 k / w_min and the batch size.
  std::size_t probes = 0;
  std::size_t batch = 0;
  std::size_t weight_samples = 0;
  double vote_radius = 0.2;
  double support_fraction = 0.9;
  // 0 means (ln(k / w_min))^{1 + c/2}.
  double band = 0.0;
  std::uint64_t seed = 0;
  int workers = 1;
  ExpansionMode mode = ExpansionMode::subset_sum;
  std::function<void(const std::string&)> log;

  std::size_t resolved_probes() const;
  std::size_t resolved_batch() const;
  double resolved_band() const;
  void validate() const;
};

struct PoincareRun {
  LearnedMixture learned;
  VoteLedger ledger;
  ProjectionChain chain;
};

PoincareRun learn_poincare(const Sampler& mix, const Sampler& base, const PoincareOptions& opts);
// Uses a prebuilt chain over the difference mixture.
PoincareRun learn_poincare_with_chain(const Sampler& mix, const Sampler& base, ProjectionChain chain,
                                      const PoincareOptions& opts);
LearnedMixture learn_means(const Sampler& mix, const Sampler& base, const PoincareOptions& opts);

// Candidates enter in order when their radius-ball support reaches min_support
// and they sit at least `separation` from every accepted candidate.
std::vector<std::size_t> majority_vote(const std::vector<Eigen::VectorXd>& candidates, double radius,
                                       double min_support, double separation, std::vector<std::size_t>* support);

struct Assignment {
  std::size_t index = 0;
  bool ambiguous = false;
};

Assignment assign_sample(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& means, double band);
Assignment assign_sample(const Eigen::VectorXd& z, const LearnedMixture& learned, double band);

// Columns: id, assigned, flags.
std::string assignments_csv(const std::vector<Assignment>& assignments);

void to_json(nlohmann::json& j, const LearnedMixture& m);
void from_json(const nlohmann::json& j, LearnedMixture& m);
void to_json(nlohmann::json& j, const VoteLedger& v);

}  // namespace pmix
