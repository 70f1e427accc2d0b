#include "pmix/mixture.hpp"

#include <cmath>
#include <limits>

#include "pmix/error.hpp"
#include "pmix/tensor_core.hpp"

namespace pmix {

BaseDist parse_base_dist(std::string_view tag) {
  if (tag == "gaussian") return BaseDist::gaussian;
  if (tag == "laplace") return BaseDist::laplace;
  if (tag == "uniform_cube") return BaseDist::uniform_cube;
  if (tag == "point_mass") return BaseDist::point_mass;
  fail(ErrorKind::unsupported_distribution, "unknown base distribution '" + std::string(tag) + "'");
}

std::string to_string(BaseDist dist) {
  switch (dist) {
    case BaseDist::gaussian: return "gaussian";
    case BaseDist::laplace: return "laplace";
    case BaseDist::uniform_cube: return "uniform_cube";
    case BaseDist::point_mass: return "point_mass";
  }
  return "unknown";
}

double coordinate_variance(BaseDist dist) { return coordinate_moment(dist, 2); }

double coordinate_moment(BaseDist dist, unsigned n) {
  if (n == 0) return 1.0;
  if (n % 2 == 1) return 0.0;
  switch (dist) {
    case BaseDist::gaussian: {
      double r = 1.0;
      for (unsigned i = n - 1; i > 1; i -= 2) r *= i;
      return r;
    }
    case BaseDist::laplace:
      return static_cast<double>(factorial(n)) * std::pow(kLaplaceScale, n);
    case BaseDist::uniform_cube:
      return std::pow(kUniformHalfWidth, n) / (n + 1);
    case BaseDist::point_mass:
      return 0.0;
  }
  return 0.0;
}

double draw_coordinate(BaseDist dist, Rng& rng) {
  switch (dist) {
    case BaseDist::gaussian: return rng.normal();
    case BaseDist::laplace: {
      double e = rng.exponential();
      return (rng.next_u64() & 1 ? e : -e) * kLaplaceScale;
    }
    case BaseDist::uniform_cube: return (2.0 * rng.uniform() - 1.0) * kUniformHalfWidth;
    case BaseDist::point_mass: return 0.0;
  }
  return 0.0;
}

double MixtureSpec::min_weight() const {
  double w = std::numeric_limits<double>::infinity();
  for (double x : weights) w = std::min(w, x);
  return w;
}

double MixtureSpec::min_separation() const {
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) s = std::min(s, (means[i] - means[j]).norm());
  return s;
}

void MixtureSpec::validate() const {
  if (weights.empty()) fail(ErrorKind::shape, "mixture without components");
  if (weights.size() != means.size()) fail(ErrorKind::shape, "weights and means differ in count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorKind::numeric, "negative or non-finite weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorKind::numeric, "weights do not sum to 1");
  for (const auto& m : means) {
    if (m.size() != means.front().size()) fail(ErrorKind::shape, "means differ in dimension");
    if (!m.allFinite()) fail(ErrorKind::numeric, "non-finite mean");
  }
}

void BaseSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  out.resize(d_);
  if (dist_ == BaseDist::gaussian) {
    rng.normals(out.data(), static_cast<std::size_t>(d_));
    return;
  }
  for (Eigen::Index i = 0; i < d_; ++i) out[i] = draw_coordinate(dist_, rng);
}

MixtureSampler::MixtureSampler(MixtureSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  double acc = 0.0;
  for (double w : spec_.weights) cumulative_.push_back(acc += w);
}

std::size_t MixtureSampler::draw_labeled(Rng& rng, Eigen::VectorXd& out) const {
  double u = rng.uniform() * cumulative_.back();
  std::size_t label = 0;
  while (label + 1 < cumulative_.size() && u >= cumulative_[label]) ++label;
  out.resize(dim());
  if (spec_.base == BaseDist::gaussian) {
    rng.normals(out.data(), static_cast<std::size_t>(out.size()));
    out += spec_.means[label];
    return label;
  }
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = spec_.means[label][i] + draw_coordinate(spec_.base, rng);
  return label;
}

void MixtureSampler::draw(Rng& rng, Eigen::VectorXd& out) const { draw_labeled(rng, out); }

}  // namespace pmix
