#include "pmix/validate.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "pmix/error.hpp"
#include "pmix/gaussian_cluster.hpp"
#include "pmix/moment_pipeline.hpp"
#include "pmix/nested_projection.hpp"
#include "pmix/poly_estimators.hpp"
#include "pmix/random.hpp"
#include "pmix/sample_test.hpp"
#include "pmix/tensor_core.hpp"

namespace pmix {

namespace {

using json = nlohmann::json;

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index d, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

Eigen::VectorXd flat_power(const Eigen::VectorXd& u, std::size_t t) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (std::size_t j = 0; j < t; ++j) out = kron(out, u);
  return out;
}

// Column 0 is mu plus a base draw; the rest are base draws.
Eigen::MatrixXd estimator_block(const Eigen::VectorXd& mu, const BaseSampler& base, std::size_t t, Rng& rng) {
  Eigen::MatrixXd block(mu.size(), static_cast<Eigen::Index>(2 * t));
  Eigen::VectorXd z(mu.size());
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    base.draw(rng, z);
    block.col(c) = c == 0 ? Eigen::VectorXd(mu + z) : z;
  }
  return block;
}

json rank1_identity(const ValidateOptions& o) {
  Rng rng(o.seed, 0x5231);
  double worst = 0.0;
  std::size_t cases = 0;
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube})
    for (std::size_t t = 1; t <= 4; ++t)
      for (Eigen::Index d = 1; d <= 3; ++d) {
        auto bm = base_moments(dist, t, d);
        for (std::size_t rep = 0; rep < o.inputs; ++rep) {
          std::vector<Eigen::VectorXd> s;
          for (std::size_t j = 0; j < 2 * t; ++j) s.push_back(random_vec(rng, d));
          worst = std::max(worst, r_poly_dense_oracle(s, t, bm).max_abs_diff(dense_sum(r_poly_terms(s, t))));
          ++cases;
        }
      }
  return {{"max_abs_deviation", worst}, {"cases", cases}, {"tolerance", 1e-9}, {"passed", worst <= 1e-9}};
}

json hermite(const ValidateOptions& o) {
  Rng rng(o.seed, 0x4845);
  double worst = 0.0;
  for (std::size_t t = 1; t <= 5; ++t)
    for (Eigen::Index d = 1; d <= 3; ++d) {
      auto bm = base_moments(BaseDist::gaussian, t, d);
      for (std::size_t rep = 0; rep < o.inputs; ++rep) {
        Eigen::VectorXd x = random_vec(rng, d, 2.0);
        worst = std::max(worst, hermite_tensor(x, t).max_abs_diff(adjusted_poly_recursive(x, t, bm)));
      }
    }
  double root_ratio = 0.0;
  for (std::size_t t = 1; t <= 12; ++t) {
    auto roots = hermite_roots(t);
    root_ratio = std::max(root_ratio, roots.cwiseAbs().maxCoeff() / (2.0 * std::sqrt(static_cast<double>(t))));
  }
  double far_ratio = INFINITY;
  for (std::size_t t = 1; t <= 10; ++t) {
    double a = 20.0 * std::sqrt(static_cast<double>(t));
    far_ratio = std::min(far_ratio, hermite_univariate(a, t) / std::pow(0.9 * a, static_cast<double>(t)));
  }
  bool ok = worst <= 1e-9 && root_ratio <= 1.0 && far_ratio >= 1.0;
  return {{"max_abs_deviation", worst},
          {"max_root_over_bound", root_ratio},
          {"min_far_value_over_bound", far_ratio},
          {"passed", ok}};
}

json unbiasedness(const ValidateOptions& o) {
  json cells = json::array();
  bool ok = true;
  Rng rng(o.seed, 0x5542);
  const Eigen::Index d = 3;
  Eigen::VectorXd mu = Eigen::Vector3d(1.0, 0.5, -0.25);
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace}) {
    BaseSampler base(dist, d);
    for (std::size_t t = 1; t <= 3; ++t) {
      Eigen::VectorXd target = flat_power(mu, t);
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(target.size()), sq = sum, r(target.size());
      Rng cell = rng.child(static_cast<std::uint64_t>(dist) * 16 + t);
      for (std::size_t i = 0; i < o.draws; ++i) {
        Eigen::MatrixXd block = estimator_block(mu, base, t, cell);
        r.setZero();
        for_each_symmetric_term(block, t, [&](double w, const Eigen::VectorXd& u) { r += w * flat_power(u, t); });
        sum += r;
        sq += r.cwiseProduct(r);
      }
      const double n = static_cast<double>(o.draws);
      Eigen::VectorXd mean = sum / n;
      Eigen::VectorXd se = ((sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0) / n).cwiseSqrt();
      double worst = 0.0;
      for (Eigen::Index e = 0; e < mean.size(); ++e)
        worst = std::max(worst, std::abs(mean[e] - target[e]) / std::max(se[e], 1e-300));
      ok = ok && worst <= 4.0;
      cells.push_back({{"base", to_string(dist)}, {"t", t}, {"max_standard_errors", worst}});
    }
  }
  return {{"cells", cells}, {"draws", o.draws}, {"passed", ok}};
}

// Second moments of v . flat R_t for each row v of `dirs`, with a mean-shifted first sample.
// Returns (moment, standard error) per direction.
std::vector<std::pair<double, double>> second_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& dirs,
                                                      const BaseSampler& base, std::size_t t, std::size_t n,
                                                      Rng& rng) {
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(dirs.rows()), s2 = s1, r(dirs.cols());
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd block = estimator_block(mu, base, t, rng);
    r.setZero();
    for_each_symmetric_term(block, t, [&](double w, const Eigen::VectorXd& u) { r += w * flat_power(u, t); });
    Eigen::ArrayXd x2 = (dirs * r).array().square();
    s1.array() += x2;
    s2.array() += x2.square();
  }
  std::vector<std::pair<double, double>> out;
  const double nd = static_cast<double>(n);
  for (Eigen::Index j = 0; j < dirs.rows(); ++j) {
    const double m = s1[j] / nd;
    out.emplace_back(m, std::sqrt(std::max(0.0, s2[j] / nd - m * m) / nd));
  }
  return out;
}

Eigen::MatrixXd unit_rows(Rng& rng, std::size_t rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = random_vec(rng, cols).normalized().transpose();
  return m;
}

json variance(const ValidateOptions& o) {
  Rng rng(o.seed, 0x5641);
  const Eigen::Index d = 3;
  bool ok = true;
  double general_ratio = 0.0, gaussian_ratio = 0.0;
  Eigen::VectorXd mu = Eigen::Vector3d(1.0, 0.5, -0.25);
  for (BaseDist dist : {BaseDist::gaussian, BaseDist::laplace, BaseDist::uniform_cube}) {
    BaseSampler base(dist, d);
    for (std::size_t t = 1; t <= 3; ++t) {
      const double td = static_cast<double>(t);
      const double bound = std::pow(20.0 * td, 2.0 * td) * (std::pow(mu.norm(), 2.0 * td) + 1.0);
      Eigen::MatrixXd dirs = unit_rows(rng, o.directions, static_cast<Eigen::Index>(std::pow(d, t)));
      for (auto [m, se] : second_moments(mu, dirs, base, t, o.moment_draws, rng)) {
        general_ratio = std::max(general_ratio, m / bound);
        ok = ok && m <= bound + 4.0 * se;
      }
    }
  }
  BaseSampler gauss(BaseDist::gaussian, d);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  for (std::size_t t = 1; t <= 4; ++t) {
    const double bound = std::pow(2.0 * static_cast<double>(t), static_cast<double>(t));
    Eigen::MatrixXd dirs = unit_rows(rng, o.directions, static_cast<Eigen::Index>(std::pow(d, t)));
    for (auto [m, se] : second_moments(zero, dirs, gauss, t, o.moment_draws, rng)) {
      gaussian_ratio = std::max(gaussian_ratio, m / bound);
      ok = ok && m <= bound + 4.0 * se;
    }
  }
  return {{"max_general_over_bound", general_ratio},
          {"max_gaussian_over_bound", gaussian_ratio},
          {"draws", o.moment_draws},
          {"passed", ok}};
}

NestedProjection random_chain(Rng& rng, Eigen::Index d, Eigen::Index k, std::size_t s) {
  NestedProjection np(d);
  for (std::size_t j = 0; j < s; ++j) {
    Eigen::Index cols = d * np.output_dim();
    Eigen::MatrixXd m(std::min(k, cols), cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    np = np.extended(orthonormalize_rows(m));
  }
  return np;
}

json projection(const ValidateOptions& o) {
  Rng rng(o.seed, 0x5052);
  double lazy_dev = 0.0, block_dev = 0.0, ortho_dev = 0.0;
  std::size_t cases = 0;
  for (Eigen::Index d : {1, 2, 3, 4, 5, 7, 10})
    for (Eigen::Index k : {1, 2, 3, 4})
      for (std::size_t s = 1; std::pow(static_cast<double>(d), static_cast<double>(s)) <= 1e4 && s <= 8; ++s) {
        auto np = random_chain(rng, d, k, s);
        Eigen::MatrixXd g = dense_matrix(np);
        ortho_dev = std::max(
            ortho_dev, (g * g.transpose() - Eigen::MatrixXd::Identity(g.rows(), g.rows())).cwiseAbs().maxCoeff());
        for (std::size_t j = 1; j <= s; ++j) ortho_dev = std::max(ortho_dev, np.prefix(j).max_orthonormality_error());
        std::vector<Eigen::VectorXd> f;
        Eigen::VectorXd flat = Eigen::VectorXd::Ones(1);
        for (std::size_t j = 0; j < s; ++j) {
          f.push_back(random_vec(rng, d));
          flat = kron(flat, f.back());
        }
        lazy_dev = std::max(lazy_dev, (apply_rank1(np, f) - g * flat).cwiseAbs().maxCoeff());
        if (s >= 2) {
          auto prev = np.prefix(s - 1);
          std::vector<Eigen::VectorXd> tail(f.begin() + 1, f.end());
          Eigen::VectorXd tail_flat = Eigen::VectorXd::Ones(1);
          for (const auto& v : tail) tail_flat = kron(tail_flat, v);
          Eigen::VectorXd expect = kron(f[0], dense_matrix(prev) * tail_flat);
          block_dev = std::max(block_dev, (apply_kron_block(prev, f[0], tail) - expect).cwiseAbs().maxCoeff());
        }
        ++cases;
      }
  bool ok = lazy_dev <= 1e-10 && block_dev <= 1e-10 && ortho_dev <= 1e-10;
  return {{"max_rank1_deviation", lazy_dev},
          {"max_kron_block_deviation", block_dev},
          {"max_orthonormality_error", ortho_dev},
          {"cases", cases},
          {"passed", ok}};
}

json oracle_projection(const ValidateOptions& o) {
  Rng rng(o.seed, 0x4f50);
  double worst = INFINITY;
  bool ok = true;
  for (std::size_t sp = 0; sp < o.specs; ++sp) {
    MixtureSpec spec;
    spec.base = BaseDist::gaussian;
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      spec.means.push_back(random_vec(rng, 4, 2.0));
      spec.weights.push_back(1.0 + rng.uniform());
      total += spec.weights.back();
    }
    for (double& w : spec.weights) w /= total;
    auto chain = iterative_projection_exact(spec, 4, 3);
    for (std::size_t s = 1; s <= 4; ++s) {
      auto np = chain.np.prefix(s);
      for (const auto& mu : spec.means) {
        double full = std::pow(mu.norm(), static_cast<double>(s));
        double kept = apply_power(np, mu).norm();
        worst = std::min(worst, kept / full);
        ok = ok && kept >= (1.0 - static_cast<double>(s) * 1e-8) * full;
      }
    }
  }
  return {{"min_kept_fraction", worst}, {"specs", o.specs}, {"passed", ok}};
}

json test_discrimination(const ValidateOptions& o) {
  const Eigen::Index d = 4;
  MixtureSpec spec;
  spec.base = BaseDist::gaussian;
  spec.weights.assign(4, 0.25);
  spec.means.push_back(Eigen::VectorXd::Zero(d));
  for (Eigen::Index i = 0; i < 3; ++i) spec.means.push_back(12.0 * Eigen::VectorXd::Unit(d, i));
  MixtureSampler mix(spec);
  BaseSampler base(BaseDist::gaussian, d);
  ChainOptions co;
  co.seed = o.seed;
  co.workers = o.workers;
  auto chain = iterative_projection(mix, base, 3, 4, 20000, co);
  auto cfg = make_test_config(12.0, 3, 4, 0.05, 64, Variant::gaussian);
  Rng rng(o.seed, 0x5444);
  std::size_t close_total = 0, close_ok = 0, far_total = 0, far_ok = 0;
  Eigen::VectorXd z(d);
  std::uint64_t id = 0;
  while (close_total < o.trials || far_total < o.trials) {
    auto label = mix.draw_labeled(rng, z);
    bool zero = label == 0;
    if ((zero && close_total >= o.trials) || (!zero && far_total >= o.trials)) continue;
    auto v = test_sample(z, chain, cfg, base, Rng(o.seed, 0x10000 + id++));
    if (zero) {
      ++close_total;
      close_ok += v.label == Label::close;
    } else {
      ++far_total;
      far_ok += v.label == Label::far;
    }
  }
  double close_rate = static_cast<double>(close_ok) / static_cast<double>(close_total);
  double far_rate = static_cast<double>(far_ok) / static_cast<double>(far_total);
  return {{"close_rate", close_rate},
          {"far_rate", far_rate},
          {"tau", cfg.tau},
          {"trials", o.trials},
          {"passed", close_rate >= 0.95 && far_rate >= 0.95}};
}

json reduction(const ValidateOptions& o) {
  bool ok = true;
  MixtureSpec spec{{0.3, 0.2, 0.3, 0.2},
                   {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(2.5, 0, 0), Eigen::Vector3d(0, 3, 0),
                    Eigen::Vector3d(1, 1, 4)},
                   BaseDist::gaussian};
  MixtureSampler mix(spec);
  std::vector<Checker> checkers;
  checkers.push_back({Eigen::Vector3d(1, 0, 0), Eigen::VectorXd::Constant(1, 0.5), 1.5});
  Eigen::MatrixXd plane = Eigen::MatrixXd::Zero(3, 2);
  plane(0, 0) = plane(1, 1) = 1.0;
  checkers.push_back({plane, Eigen::Vector2d(0.5, 0.5), 2.0});
  double worst_se = 0.0;
  Rng rng(o.seed, 0x5244);
  for (const auto& ch : checkers) {
    auto oracle = truncated_weights_oracle(spec, ch, 1e9);
    std::vector<std::size_t> counts(spec.k(), 0);
    std::size_t kept = 0;
    Eigen::VectorXd x(3);
    for (std::size_t i = 0; i < o.draws; ++i) {
      auto l = mix.draw_labeled(rng, x);
      if (checker_contains(ch, x)) {
        ++counts[l];
        ++kept;
      }
    }
    for (std::size_t r = 0; r < oracle.relevant.size(); ++r) {
      double p = oracle.weights[r];
      double phat = static_cast<double>(counts[oracle.relevant[r]]) / static_cast<double>(kept);
      double se = std::sqrt(p * (1 - p) / static_cast<double>(kept));
      worst_se = std::max(worst_se, std::abs(phat - p) / se);
    }
  }
  ok = ok && worst_se <= 4.0;

  std::size_t intact = 0;
  for (std::size_t seed = 0; seed < o.seeds; ++seed) {
    MixtureSpec far{{0.3, 0.3, 0.4},
                    {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1e7, 0, 0), Eigen::Vector3d(0, 1e7, 5e6)},
                    BaseDist::gaussian};
    MixtureSampler fm(far);
    Rng sr(o.seed + seed, 0x5350);
    std::vector<Eigen::VectorXd> xs(600);
    std::vector<std::size_t> labels(600);
    for (std::size_t i = 0; i < xs.size(); ++i) labels[i] = fm.draw_labeled(sr, xs[i]);
    auto regions = reduce_bounded_means(xs, 3, 0.3, 1.0);
    std::vector<int> region_of(3, -1);
    bool whole = true;
    for (std::size_t r = 0; r < regions.size(); ++r)
      for (auto idx : regions[r].members) {
        auto l = labels[idx];
        if (region_of[l] == -1) region_of[l] = static_cast<int>(r);
        whole = whole && region_of[l] == static_cast<int>(r);
      }
    intact += whole;
  }
  ok = ok && intact == o.seeds;

  double dist_dev = 0.0;
  for (std::size_t sp = 0; sp < o.specs; ++sp) {
    const Eigen::Index d = 10, k = 3;
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::MatrixXd q = g.householderQr().householderQ();
    std::vector<Eigen::VectorXd> means;
    std::vector<double> w{0.2, 0.5, 0.3};
    for (Eigen::Index i = 0; i < k; ++i) means.push_back(q.leftCols(k) * random_vec(rng, k, 5.0));
    Eigen::VectorXd bar = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < k; ++i) bar += w[i] * means[i];
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < k; ++i) sigma += w[i] * (means[i] - bar) * (means[i] - bar).transpose();
    Eigen::MatrixXd b = principal_basis(sigma, Eigen::MatrixXd::Identity(d, d), k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = i + 1; j < k; ++j)
        dist_dev = std::max(dist_dev,
                            std::abs((b.transpose() * (means[i] - means[j])).norm() - (means[i] - means[j]).norm()));
  }
  ok = ok && dist_dev <= 1e-6;
  return {{"max_proportion_standard_errors", worst_se},
          {"split_intact_seeds", intact},
          {"seeds", o.seeds},
          {"max_distance_deviation", dist_dev},
          {"passed", ok}};
}

}  // namespace

#define PMIX_VALIDATE_FIELDS(X) \
  X(seed) X(workers) X(inputs) X(draws) X(moment_draws) X(directions) X(specs) X(trials) X(seeds)

void to_json(nlohmann::json& j, const ValidateOptions& o) {
  j = json::object();
#define X(f) j[#f] = o.f;
  PMIX_VALIDATE_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, ValidateOptions& o) {
  if (!j.is_object()) fail(ErrorKind::config, "validate options must be an object");
  static const std::set<std::string> known{
#define X(f) #f,
      PMIX_VALIDATE_FIELDS(X)
#undef X
  };
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(ErrorKind::config, "unknown key '" + key + "' in validate");
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(o.f);
    PMIX_VALIDATE_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("validate: ") + e.what());
  }
  if (o.workers < 1 || o.inputs < 1 || o.draws < 2 || o.moment_draws < 2 || o.directions < 1 || o.specs < 1 ||
      o.trials < 1 || o.seeds < 1)
    fail(ErrorKind::config, "validate sizes must be positive");
}

const std::vector<std::string>& validation_selectors() {
  static const std::vector<std::string> names{"rank1-identity", "hermite",           "unbiasedness",
                                              "variance",       "projection",        "oracle-projection",
                                              "test-discrimination", "reduction"};
  return names;
}

nlohmann::json run_validation(const std::string& selector, const ValidateOptions& opts) {
  auto start = std::chrono::steady_clock::now();
  json out;
  if (selector == "rank1-identity") out = rank1_identity(opts);
  else if (selector == "hermite") out = hermite(opts);
  else if (selector == "unbiasedness") out = unbiasedness(opts);
  else if (selector == "variance") out = variance(opts);
  else if (selector == "projection") out = projection(opts);
  else if (selector == "oracle-projection") out = oracle_projection(opts);
  else if (selector == "test-discrimination") out = test_discrimination(opts);
  else if (selector == "reduction") out = reduction(opts);
  else fail(ErrorKind::config, "unknown selector '" + selector + "'");
  out["selector"] = selector;
  out["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace pmix
