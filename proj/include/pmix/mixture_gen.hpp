#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmix/mixture.hpp"
#include "pmix/random.hpp"

namespace pmix {

enum class SeparationProfile { uniform, hierarchical };
enum class WeightProfile { uniform, dirichlet, fixed };

struct GenConfig {
  std::size_t k = 1;
  Eigen::Index d = 1;
  SeparationProfile separation = SeparationProfile::uniform;
  // Uniform profile: pairwise distances land in [sep, 1.2 sep].
  double sep = 10.0;
  // Hierarchical profile: separation per level, innermost first.
  std::vector<double> level_separations;
  WeightProfile weighting = WeightProfile::uniform;
  // Dirichlet-like profile: w_i proportional to 1 + spread * Exp(1).
  double spread = 1.0;
  std::vector<double> weights;
  BaseDist base = BaseDist::gaussian;
  std::uint64_t seed = 0;

  void validate() const;
};

MixtureSpec build_spec(const GenConfig& cfg);

// Places k points with pairwise distances in [sep, 1.2 sep], centered at the origin.
std::vector<Eigen::VectorXd> place_points(std::size_t k, Eigen::Index d, double sep, Rng& rng);

struct LabeledSample {
  Eigen::VectorXd x;
  std::size_t label = 0;
};

// The i-th draw depends only on (seed, i).
class SampleStream {
 public:
  SampleStream(MixtureSpec spec, std::uint64_t seed);
  LabeledSample next();
  LabeledSample at(std::uint64_t index) const;
  std::vector<LabeledSample> take(std::size_t n);
  std::uint64_t position() const { return index_; }
  const MixtureSampler& sampler() const { return sampler_; }

 private:
  MixtureSampler sampler_;
  Rng root_;
  std::uint64_t index_ = 0;
};

SampleStream sample_stream(const MixtureSpec& spec, std::uint64_t seed);

class BaseStream {
 public:
  BaseStream(BaseDist dist, Eigen::Index d, std::uint64_t seed);
  Eigen::VectorXd next();
  const BaseSampler& sampler() const { return sampler_; }

 private:
  BaseSampler sampler_;
  Rng root_;
  std::uint64_t index_ = 0;
};

BaseStream base_sampler(const std::string& tag, Eigen::Index d, std::uint64_t seed);

// Columns: id, x_0..x_{d-1}, label.
void write_samples_csv(std::ostream& out, const std::vector<LabeledSample>& samples);
void write_samples_csv(const std::string& path, const std::vector<LabeledSample>& samples);
// Reads the same layout; the label column is optional.
std::vector<LabeledSample> read_samples_csv(const std::string& path, bool* has_labels = nullptr);

void to_json(nlohmann::json& j, const MixtureSpec& spec);
void from_json(const nlohmann::json& j, MixtureSpec& spec);
void to_json(nlohmann::json& j, const GenConfig& cfg);
// Strict: unknown keys are config errors.
void from_json(const nlohmann::json& j, GenConfig& cfg);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace pmix
