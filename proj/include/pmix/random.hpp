#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace pmix {

// Counter-based generator: the i-th output of a stream is a pure function of
// (key, i), so any stream can be recreated from (seed, stream_id, counter).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  double uniform();
  double normal();
  // n standard normals, two per accepted polar pair.
  void normals(double* out, std::size_t n);
  double exponential();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent stream derived from this stream's key; does not advance it.
  Rng child(std::uint64_t id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual Eigen::Index dim() const = 0;
  virtual void draw(Rng& rng, Eigen::VectorXd& out) const = 0;

  Eigen::VectorXd draw(Rng& rng) const {
    Eigen::VectorXd out(dim());
    draw(rng, out);
    return out;
  }
};

}  // namespace pmix
