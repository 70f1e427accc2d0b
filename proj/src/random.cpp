#include "pmix/random.hpp"

#include <cmath>
#include <numbers>

namespace pmix {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream_id)
    : key_(mix64(mix64(seed + kGolden) ^ (stream_id * 0xd1b54a32d192ed03ULL + 1))) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::normals(double* out, std::size_t n) {
  std::size_t i = 0;
  while (i < n) {
    double a = 2.0 * uniform() - 1.0;
    double b = 2.0 * uniform() - 1.0;
    double r = a * a + b * b;
    if (r >= 1.0 || r == 0.0) continue;
    double f = std::sqrt(-2.0 * std::log(r) / r);
    out[i++] = a * f;
    if (i < n) out[i++] = b * f;
  }
}

double Rng::exponential() { return -std::log(1.0 - uniform()); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Rng Rng::child(std::uint64_t id) const {
  return Rng(FromKey{}, mix64(key_ ^ mix64(id + 0x632be59bd9b4e019ULL)));
}

}  // namespace pmix
