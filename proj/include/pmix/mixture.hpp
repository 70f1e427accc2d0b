#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pmix/random.hpp"

namespace pmix {

enum class BaseDist { gaussian, laplace, uniform_cube, point_mass };

BaseDist parse_base_dist(std::string_view tag);
std::string to_string(BaseDist dist);

// Per-coordinate calibration making each product base 1-Poincaré.
// Two-sided exponential with scale b has Poincaré constant 4b^2.
inline constexpr double kLaplaceScale = 0.5;
// Uniform on [-L, L] has Poincaré constant (2L/pi)^2.
inline constexpr double kUniformHalfWidth = 1.5707963267948966;

double coordinate_variance(BaseDist dist);
// E[x^n] for one coordinate of the base.
double coordinate_moment(BaseDist dist, unsigned n);
double draw_coordinate(BaseDist dist, Rng& rng);

struct MixtureSpec {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  BaseDist base = BaseDist::gaussian;

  std::size_t k() const { return weights.size(); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  double min_weight() const;
  double min_separation() const;
  void validate() const;
};

class BaseSampler final : public Sampler {
 public:
  BaseSampler(BaseDist dist, Eigen::Index d) : dist_(dist), d_(d) {}
  Eigen::Index dim() const override { return d_; }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;
  BaseDist dist() const { return dist_; }

 private:
  BaseDist dist_;
  Eigen::Index d_;
};

class MixtureSampler final : public Sampler {
 public:
  explicit MixtureSampler(MixtureSpec spec);
  Eigen::Index dim() const override { return spec_.dim(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override;
  using Sampler::draw;
  // Draws a sample and reports its component.
  std::size_t draw_labeled(Rng& rng, Eigen::VectorXd& out) const;
  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
  std::vector<double> cumulative_;
};

}  // namespace pmix
