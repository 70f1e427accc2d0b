#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmix/mixture.hpp"
#include "pmix/moment_pipeline.hpp"
#include "pmix/poincare_cluster.hpp"
#include "pmix/random.hpp"

namespace pmix {

// (V, p, r): basis columns span V, p holds coordinates in that basis.
struct Checker {
  Eigen::MatrixXd basis;
  Eigen::VectorXd p;
  double r = 1.0;

  static Checker trivial(Eigen::Index d, double r = 1.0);
  Eigen::Index ambient() const { return basis.rows(); }
  Eigen::Index dim() const { return basis.cols(); }
  Checker with_radius(double radius) const;
  void validate() const;
};

bool checker_contains(const Checker& ch, const Eigen::VectorXd& x);

// Orthonormal basis of the complement of span(basis), completed from the
// standard axes in order; columns are sign-normalized.
Eigen::MatrixXd complement_basis(const Eigen::MatrixXd& basis);

std::vector<Eigen::VectorXd> reduce_by_checker(const std::vector<Eigen::VectorXd>& samples, const Checker& ch);

// Draws from `inner` until the checker accepts, then returns V-perp
// coordinates, or the draw itself when `project` is off.
class ReducedSampler final : public Sampler {
 public:
  ReducedSampler(const Sampler& inner, Checker ch, bool project = true, std::size_t max_tries = 200000);
  Eigen::Index dim() const override { return complement_.cols(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;
  const Checker& checker() const { return ch_; }
  const Eigen::MatrixXd& complement() const { return complement_; }

 private:
  const Sampler& inner_;
  Checker ch_;
  Eigen::MatrixXd complement_;
  std::size_t max_tries_;
};

// Pr[checker accepts x] for x ~ N(mu, I).
double checker_acceptance(const Checker& ch, const Eigen::VectorXd& mu);

struct TruncatedWeights {
  std::vector<std::size_t> relevant;
  std::vector<double> weights;
  std::vector<double> acceptance;

  bool empty() const { return relevant.empty(); }
};

TruncatedWeights truncated_weights_oracle(const MixtureSpec& spec, const Checker& ch, double theta);

struct SignalDirection {
  Eigen::VectorXd v;
  double p_level = 0.0;
  double delta = 0.0;
  double theta = 0.0;
};

// Some split point has mass >= 0.95 p_level at least delta below and above it.
bool is_signal_direction(const std::vector<Eigen::VectorXd>& samples, const Eigen::VectorXd& v, double p_level,
                         double delta, double* theta = nullptr);

// Radii are multiples of theta = (ln K)^{(1+c)/2}; sizes are per call.
struct GaussianConstants {
  double contains_radius = 10;
  double keep_radius = 17;
  double reduce_radius = 19;
  double core_radius = 11;
  double max_sep_offset = 30;
  // 0 means ceil(1e4 ln ln K).
  std::size_t gamma_max = 0;
  // 0 means ceil((ln K)^{1 + 0.1 c}).
  std::size_t rounds = 0;
  double grid_ratio = 1.1;
  // Pair tests run at scale max(floor, factor * delta); a negative floor
  // -m stands for m times the separation parameter.
  double test_scale_factor = 0.01;
  double test_scale_floor = 0.0;
  double check_mass = 0.8;
  double check_delta = 0.8;
  double max_sep_signal = 0.4;
  double refine_signal = 0.04;
  double split_gap = 0.01;
  double good_fraction = 0.9;
  double vote_radius = 0.02;
  double dedup_radius = 0.1;
  double support_fraction = 0.9;
  double band_factor = 0.1;
  double isolate_min_weight = 0.5;
  // 0 means (w*/k)^10 for the final clustering; otherwise scale * w*.
  double isolate_weight_scale = 0.0;
  double split_distance = 1e6;
  // Off keeps the V coordinates in reductions, so separations inside V stay visible.
  bool project_reductions = true;

  std::size_t t = 3;
  std::size_t reps = 32;
  std::size_t n_per_stage = 10000;
  std::size_t trials = 8;
  std::size_t batch = 200;
  std::size_t probes = 40;
  std::size_t signal_samples = 2000;
  std::size_t select_samples = 600;
  std::size_t assign_samples = 4000;
  std::size_t estimate_samples = 2500;
  std::size_t initial_samples = 4000;
  // Nearest-candidate re-averaging passes after the vote.
  std::size_t mean_passes = 2;

  static GaussianConstants asymptotic();
  // Test scale tied to the separation, short gamma sweep, loose vote radius.
  static GaussianConstants desk();
};

void to_json(nlohmann::json& j, const GaussianConstants& c);
void from_json(const nlohmann::json& j, GaussianConstants& c);

struct DiagnosticEvent {
  std::size_t level = 0;
  std::string action;
  Eigen::Index checker_dim = 0;
  double radius = 0.0;
  // -1 without ground truth.
  int means_in_scope = -1;
};

void to_json(nlohmann::json& j, const DiagnosticEvent& e);
std::string diagnostics_jsonl(const std::vector<DiagnosticEvent>& events);

struct GaussianOptions {
  std::size_t k = 1;
  double w_min = 0.1;
  double c = 0.5;
  // 0 means (ln(k / w_min))^{1/2 + c}.
  double sep = 0.0;
  double alpha = 0.3;
  double delta = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;
  GaussianConstants constants = GaussianConstants::desk();
  std::function<void(const std::string&)> log;
  // Ground truth for means_in_scope; optional.
  const MixtureSpec* oracle = nullptr;

  double log_k() const;
  double theta() const;
  double beta() const;
  double resolved_sep() const;
  std::size_t gamma_max() const;
  std::size_t rounds() const;
  void validate() const;
};

// Chain over the difference mixture of the reduction by a checker.
ProjectionChain scope_chain(const Sampler& reduced, std::size_t k, const GaussianOptions& opts, std::uint64_t seed);

// Finds v in the reduced coordinates with a verified (check_mass w*, check_delta Δ) split,
// trying Δ from delta_hi down to delta_lo on a grid_ratio grid. Candidate
// directions are orthogonalized against the columns of `exclude`.
SignalDirection find_signal_direction(const Sampler& reduced, const ProjectionChain& chain, double w_star,
                                      double delta_lo, double delta_hi, const GaussianOptions& opts, Rng rng,
                                      const Eigen::MatrixXd& exclude = Eigen::MatrixXd());

std::vector<Eigen::VectorXd> full_cluster_bounded(const Sampler& reduced, const ProjectionChain& chain, double w_star,
                                                  const GaussianOptions& opts, Rng rng);

Assignment cluster_with_means(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& means, double s,
                              double band_factor = 0.1);

enum class SeparationVerdict { accept, reject };

// Working samples live in the coordinates of `mix`; the chain comes from
// scope_chain on the reduction of mix by ch at chain_radius.
Checker refine_checker(const Sampler& mix, const Checker& ch, const ProjectionChain& chain, const GaussianOptions& opts,
                       Rng rng);
SeparationVerdict test_max_separation(const Sampler& mix, const Checker& ch, const ProjectionChain& chain,
                                      const GaussianOptions& opts, Rng rng);

struct ComponentTest {
  Checker keep;
  Eigen::MatrixXd complement;
  std::vector<Eigen::VectorXd> candidates;
  std::size_t target = 0;
  double s = 1.0;
  double band_factor = 0.1;

  bool accepts(const Eigen::VectorXd& x) const;
};

ComponentTest isolate_component(const Sampler& mix, const Checker& ch, const ProjectionChain& chain,
                                const GaussianOptions& opts, Rng rng);

double chain_radius(const GaussianOptions& opts);

struct Halfspace {
  Eigen::VectorXd normal;
  double offset = 0.0;
  // Keeps x with sign * (normal . x - offset) >= 0.
  double sign = 1.0;

  bool contains(const Eigen::VectorXd& x) const { return sign * (normal.dot(x) - offset) >= 0; }
};

struct SampleRegion {
  std::vector<Halfspace> cuts;
  std::vector<std::size_t> members;
  Eigen::VectorXd center;
  std::vector<Eigen::VectorXd> recentered;
};

double split_threshold(std::size_t d, std::size_t k, double w_min, double scale = 1e6);

std::vector<SampleRegion> reduce_bounded_means(const std::vector<Eigen::VectorXd>& samples, std::size_t k, double w_min,
                                               double scale = 1e6);

struct DimensionReduction {
  Eigen::VectorXd center;
  // d x d' with orthonormal columns.
  Eigen::MatrixXd basis;
  std::vector<Eigen::VectorXd> projected;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return basis.transpose() * (x - center); }
};

// Top-k eigenvectors of sigma_m - sigma_d, sign-normalized.
Eigen::MatrixXd principal_basis(const Eigen::MatrixXd& sigma_m, const Eigen::MatrixXd& sigma_d, Eigen::Index k);
DimensionReduction reduce_dimension(const std::vector<Eigen::VectorXd>& samples, const Eigen::MatrixXd& sigma_d,
                                    std::size_t k);

// Keeps draws of `inner` inside every cut and outside every removed component.
class FilteredSampler final : public Sampler {
 public:
  FilteredSampler(const Sampler& inner, std::vector<Halfspace> cuts, std::size_t max_tries = 200000);
  Eigen::Index dim() const override { return inner_.dim(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;
  bool keeps(const Eigen::VectorXd& x) const;
  void remove(std::function<bool(const Eigen::VectorXd&)> test) { removed_.push_back(std::move(test)); }

 private:
  const Sampler& inner_;
  std::vector<Halfspace> cuts_;
  std::vector<std::function<bool(const Eigen::VectorXd&)>> removed_;
  std::size_t max_tries_;
};

class ProjectedSampler final : public Sampler {
 public:
  ProjectedSampler(const Sampler& inner, const DimensionReduction& red) : inner_(inner), red_(red) {}
  Eigen::Index dim() const override { return red_.basis.cols(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;

 private:
  const Sampler& inner_;
  const DimensionReduction& red_;
};

struct GaussianRun {
  LearnedMixture learned;
  std::vector<DiagnosticEvent> diagnostics;
  std::size_t regions = 1;
  bool partial = false;
};

GaussianRun recursive_cluster(const Sampler& mix, const GaussianOptions& opts);

void to_json(nlohmann::json& j, const GaussianRun& run);

}  // namespace pmix
