#include "pmix/poly_estimators.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "pmix/error.hpp"

namespace pmix {

namespace {

void check_dense(std::size_t order, Eigen::Index side) {
  if (order > kCombinatorialGuard ||
      std::pow(static_cast<double>(side), static_cast<double>(order)) > kDenseEntryGuard)
    fail(ErrorKind::size_limit, "dense tensor of order " + std::to_string(order) + " and side " +
                                    std::to_string(side) + " exceeds the dense guard");
}

// Visits every multi-index of an order-t, side-d box in row-major order.
template <class Fn>
void for_each_index(std::size_t t, Eigen::Index d, Fn&& fn) {
  std::vector<std::size_t> eta(t, 0);
  const auto side = static_cast<std::size_t>(d);
  Eigen::Index linear = 0;
  while (true) {
    fn(eta, linear++);
    std::size_t p = t;
    while (p > 0) {
      --p;
      if (++eta[p] < side) break;
      eta[p] = 0;
      if (p == 0) return;
    }
    if (t == 0) return;
  }
}

Eigen::Index sub_index(const std::vector<std::size_t>& eta, const IndexSet& positions, Eigen::Index d) {
  Eigen::Index r = 0;
  for (auto p : positions) r = r * d + static_cast<Eigen::Index>(eta[p]);
  return r;
}

using Matching = std::vector<std::pair<std::size_t, std::size_t>>;

// Partitions of [n] into pairs and (if allow_single) singletons.
void grow_matchings(std::vector<bool>& used, std::size_t n, bool allow_single, Matching& pairs,
                    IndexSet& singles, std::vector<std::pair<Matching, IndexSet>>& out) {
  std::size_t first = 0;
  while (first < n && used[first]) ++first;
  if (first == n) {
    out.emplace_back(pairs, singles);
    return;
  }
  used[first] = true;
  if (allow_single) {
    singles.push_back(first);
    grow_matchings(used, n, allow_single, pairs, singles, out);
    singles.pop_back();
  }
  for (std::size_t j = first + 1; j < n; ++j) {
    if (used[j]) continue;
    used[j] = true;
    pairs.emplace_back(first, j);
    grow_matchings(used, n, allow_single, pairs, singles, out);
    pairs.pop_back();
    used[j] = false;
  }
  used[first] = false;
}

std::vector<std::pair<Matching, IndexSet>> matchings(std::size_t n, bool allow_single) {
  std::vector<std::pair<Matching, IndexSet>> out;
  std::vector<bool> used(n, false);
  Matching pairs;
  IndexSet singles;
  grow_matchings(used, n, allow_single, pairs, singles, out);
  return out;
}

void check_vector(const Eigen::VectorXd& x, const BaseMoments& bm, std::size_t t) {
  if (x.size() != bm.d) fail(ErrorKind::shape, "point dimension differs from base moments");
  if (bm.moments.size() < t) fail(ErrorKind::size_limit, "base moments computed to a lower order");
}

}  // namespace

DenseTensor DenseTensor::zeros(std::size_t order, Eigen::Index side) {
  check_dense(order, side);
  DenseTensor out;
  out.order = order;
  out.side = side;
  out.data = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(std::llround(std::pow(side, order))));
  return out;
}

double DenseTensor::at(const std::vector<std::size_t>& idx) const {
  std::vector<std::size_t> dims(order, static_cast<std::size_t>(side));
  return data[static_cast<Eigen::Index>(flatten_index({idx, dims}))];
}

double DenseTensor::max_abs_diff(const DenseTensor& other) const {
  if (order != other.order || side != other.side) fail(ErrorKind::shape, "tensor shapes differ");
  return (data - other.data).cwiseAbs().maxCoeff();
}

BaseMoments base_moments(BaseDist dist, std::size_t t, Eigen::Index d) {
  if (t > 6 || d > 4) fail(ErrorKind::size_limit, "base moments limited to t <= 6, d <= 4");
  BaseMoments bm{dist, d, {}};
  for (std::size_t j = 1; j <= t; ++j) {
    DenseTensor D = DenseTensor::zeros(j, d);
    if (dist == BaseDist::gaussian) {
      auto pairings = matchings(j, false);
      for_each_index(j, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
        double v = 0.0;
        for (const auto& [pairs, singles] : pairings) {
          bool all = true;
          for (auto [a, b] : pairs) all = all && eta[a] == eta[b];
          if (all) v += 1.0;
        }
        D.data[lin] = v;
      });
    } else {
      for_each_index(j, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
        std::vector<unsigned> counts(static_cast<std::size_t>(d), 0);
        for (auto e : eta) ++counts[e];
        double v = 1.0;
        for (auto c : counts) v *= coordinate_moment(dist, c);
        D.data[lin] = v;
      });
    }
    bm.moments.push_back(std::move(D));
  }
  return bm;
}

DenseTensor tensor_power(const Eigen::VectorXd& x, std::size_t t) {
  DenseTensor out = DenseTensor::zeros(t, x.size());
  for_each_index(t, x.size(), [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
    double v = 1.0;
    for (auto e : eta) v *= x[static_cast<Eigen::Index>(e)];
    out.data[lin] = v;
  });
  return out;
}

DenseTensor adjusted_poly_recursive(const Eigen::VectorXd& x, std::size_t t, const BaseMoments& bm) {
  check_vector(x, bm, t);
  const Eigen::Index d = x.size();
  std::vector<DenseTensor> P;
  P.push_back(DenseTensor::zeros(0, d));
  P[0].data[0] = 1.0;
  for (std::size_t j = 1; j <= t; ++j) {
    DenseTensor cur = tensor_power(x, j);
    for (std::size_t i = 1; i <= j; ++i) {
      const DenseTensor& D = bm.order(i);
      const DenseTensor& rest = P[j - i];
      for (const auto& blocks : sym_interleavings({i, j - i})) {
        for_each_index(j, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
          cur.data[lin] -= D.data[sub_index(eta, blocks[0], d)] * rest.data[sub_index(eta, blocks[1], d)];
        });
      }
    }
    P.push_back(std::move(cur));
  }
  return P[t];
}

DenseTensor adjusted_poly_explicit(const Eigen::VectorXd& x, std::size_t t, const BaseMoments& bm) {
  check_vector(x, bm, t);
  const Eigen::Index d = x.size();
  DenseTensor out = DenseTensor::zeros(t, d);
  for (std::size_t mask = 0; mask < (std::size_t{1} << t); ++mask) {
    IndexSet kept, rest;
    for (std::size_t p = 0; p < t; ++p) ((mask >> p) & 1 ? kept : rest).push_back(p);
    for (const auto& z : unordered_partitions(rest, t)) {
      const std::size_t C = z.blocks.size();
      double coeff = (C % 2 ? -1.0 : 1.0) * static_cast<double>(factorial(C));
      for_each_index(t, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
        double v = coeff;
        for (auto p : kept) v *= x[static_cast<Eigen::Index>(eta[p])];
        for (const auto& B : z.blocks) v *= bm.order(B.size()).data[sub_index(eta, B, d)];
        out.data[lin] += v;
      });
    }
  }
  return out;
}

DenseTensor hermite_tensor(const Eigen::VectorXd& x, std::size_t t) {
  const Eigen::Index d = x.size();
  DenseTensor out = DenseTensor::zeros(t, d);
  auto parts = matchings(t, true);
  for_each_index(t, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
    double total = 0.0;
    for (const auto& [pairs, singles] : parts) {
      double v = 1.0;
      for (auto [a, b] : pairs) v *= eta[a] == eta[b] ? -1.0 : 0.0;
      if (v == 0.0) continue;
      for (auto s : singles) v *= x[static_cast<Eigen::Index>(eta[s])];
      total += v;
    }
    out.data[lin] = total;
  });
  return out;
}

double hermite_univariate(double a, std::size_t t) {
  if (t == 0) return 1.0;
  double prev = 1.0, cur = a;
  for (std::size_t n = 2; n <= t; ++n) {
    double next = a * cur - static_cast<double>(n - 1) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Eigen::VectorXd hermite_roots(std::size_t t) {
  if (t == 0) return Eigen::VectorXd(0);
  const auto n = static_cast<Eigen::Index>(t);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) J(i - 1, i) = J(i, i - 1) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

Rational::Rational(std::int64_t n, std::int64_t d) {
  if (d == 0) fail(ErrorKind::numeric, "rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  num = g ? n / g : 0;
  den = g ? d / g : 1;
}

Rational Rational::operator+(const Rational& o) const {
  std::int64_t g = std::gcd(den, o.den);
  __int128 n = static_cast<__int128>(num) * (o.den / g) + static_cast<__int128>(o.num) * (den / g);
  __int128 d = static_cast<__int128>(den / g) * o.den;
  __int128 h = n < 0 ? -n : n;
  __int128 a = d;
  while (a != 0) {
    __int128 r = h % a;
    h = a;
    a = r;
  }
  if (h == 0) return Rational(0, 1);
  return Rational(static_cast<std::int64_t>(n / h), static_cast<std::int64_t>(d / h));
}

Rational Rational::operator*(const Rational& o) const {
  Rational a(num, o.den), b(o.num, den);
  return Rational(a.num * b.num, a.den * b.den);
}

Rational rank1_coefficient(std::size_t t, std::size_t c) {
  if (c == 0 || c > t) fail(ErrorKind::arity, "nonempty count outside [1, t]");
  auto q = static_cast<std::int64_t>(binomial(t - 1, c - 1));
  return Rational((c - 1) % 2 ? -1 : 1, q);
}

Rank1Expansion r_poly_terms(const std::vector<Eigen::VectorXd>& samples, std::size_t t) {
  if (t == 0 || samples.size() != 2 * t)
    fail(ErrorKind::arity, "expected " + std::to_string(2 * t) + " samples, got " + std::to_string(samples.size()));
  for (const auto& s : samples)
    if (s.size() != samples.front().size()) fail(ErrorKind::shape, "samples differ in dimension");
  if (t > 8) fail(ErrorKind::size_limit, "labeled expansion limited to t <= 8");
  Rank1Expansion out;
  out.degree = t;
  std::vector<Rank1Term> primed;
  LabeledPartitions stream(t);
  while (stream.next()) {
    double coeff = rank1_coefficient(t, stream.nonempty()).value();
    Rank1Term x{coeff, {}}, xp{-coeff, {}};
    for (auto slot : stream.slots()) {
      x.factors.push_back(samples[slot]);
      xp.factors.push_back(samples[t + slot]);
    }
    out.terms.push_back(std::move(x));
    primed.push_back(std::move(xp));
  }
  for (auto& term : primed) out.terms.push_back(std::move(term));
  return out;
}

std::vector<Rational> subset_sum_weights_exact(std::size_t t) {
  if (t == 0 || t > 16) fail(ErrorKind::size_limit, "subset-sum weights need 1 <= t <= 16");
  std::vector<Rational> a(t + 1), b(t + 1);
  for (std::size_t c = 1; c <= t; ++c) a[c] = rank1_coefficient(t, c);
  for (std::size_t w = 1; w <= t; ++w) {
    Rational acc;
    for (std::size_t u = w; u <= t; ++u) {
      auto mult = static_cast<std::int64_t>(binomial(t - w, u - w));
      acc = acc + Rational((u - w) % 2 ? -mult : mult) * a[u];
    }
    b[w] = acc;
  }
  return b;
}

const std::vector<double>& subset_sum_weights(std::size_t t) {
  static std::mutex lock;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard<std::mutex> guard(lock);
  auto it = cache.find(t);
  if (it == cache.end()) {
    std::vector<double> w;
    for (const auto& r : subset_sum_weights_exact(t)) w.push_back(r.value());
    it = cache.emplace(t, std::move(w)).first;
  }
  return it->second;
}

SymmetricExpansion r_poly_symmetric(const std::vector<Eigen::VectorXd>& samples, std::size_t t) {
  if (t == 0 || samples.size() != 2 * t)
    fail(ErrorKind::arity, "expected " + std::to_string(2 * t) + " samples, got " + std::to_string(samples.size()));
  const Eigen::Index d = samples.front().size();
  Eigen::MatrixXd block(d, static_cast<Eigen::Index>(2 * t));
  for (std::size_t j = 0; j < 2 * t; ++j) {
    if (samples[j].size() != d) fail(ErrorKind::shape, "samples differ in dimension");
    block.col(static_cast<Eigen::Index>(j)) = samples[j];
  }
  SymmetricExpansion out;
  out.degree = t;
  for_each_symmetric_term(block, t, [&](double w, const Eigen::VectorXd& u) { out.terms.push_back({w, u}); });
  return out;
}

DenseTensor dense_sum(const Rank1Expansion& e) {
  if (e.terms.empty()) fail(ErrorKind::shape, "empty expansion");
  DenseTensor out = DenseTensor::zeros(e.degree, e.terms.front().dim());
  for (const auto& term : e.terms) out.data += flatten(term);
  return out;
}

DenseTensor dense_sum(const SymmetricExpansion& e) {
  if (e.terms.empty()) fail(ErrorKind::shape, "empty expansion");
  DenseTensor out = DenseTensor::zeros(e.degree, e.terms.front().u.size());
  for (const auto& term : e.terms) out.data += term.coeff * tensor_power(term.u, e.degree).data;
  return out;
}

DenseTensor r_poly_dense_oracle(const std::vector<Eigen::VectorXd>& samples, std::size_t t, const BaseMoments& bm) {
  if (t == 0 || samples.size() != 2 * t) fail(ErrorKind::arity, "expected 2t samples");
  if (t > 6) fail(ErrorKind::size_limit, "dense oracle limited to t <= 6");
  const Eigen::Index d = bm.d;
  // P[i][j] = P_j(samples[i])
  std::vector<std::vector<DenseTensor>> P(2 * t);
  for (std::size_t i = 0; i < 2 * t; ++i) {
    DenseTensor one = DenseTensor::zeros(0, d);
    one.data[0] = 1.0;
    P[i].push_back(one);
    for (std::size_t j = 1; j <= t; ++j) P[i].push_back(adjusted_poly_recursive(samples[i], j, bm));
  }
  DenseTensor out = DenseTensor::zeros(t, d);
  LabeledPartitions stream(t);
  while (stream.next()) {
    const auto part = stream.partition();
    const std::size_t C = stream.nonempty();
    // Q_t coefficient is (-1)^C / binom(t-1, C-1); R_t = -Q_t(x) + Q_t(x').
    const double q = (C % 2 ? -1.0 : 1.0) / static_cast<double>(binomial(t - 1, C - 1));
    for_each_index(t, d, [&](const std::vector<std::size_t>& eta, Eigen::Index lin) {
      double left = 1.0, right = 1.0;
      for (std::size_t i = 0; i < t; ++i) {
        const auto& S = part.parts[i];
        const Eigen::Index sub = sub_index(eta, S, d);
        left *= P[i][S.size()].data[sub];
        right *= P[t + i][S.size()].data[sub];
      }
      out.data[lin] += q * (right - left);
    });
  }
  return out;
}

}  // namespace pmix
