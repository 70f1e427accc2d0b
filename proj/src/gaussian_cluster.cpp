#include "pmix/gaussian_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>

#include "pmix/error.hpp"
#include "pmix/parallel.hpp"
#include "pmix/sample_test.hpp"

namespace pmix {

namespace {

constexpr std::uint64_t kGmmStream = 0x474d4d;

std::vector<Eigen::VectorXd> draw_many(const Sampler& s, Rng root, std::size_t n) {
  std::vector<Eigen::VectorXd> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.child(i);
    s.draw(rng, out[i]);
  }
  return out;
}

Eigen::VectorXd sign_normalized(Eigen::VectorXd v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
  return v;
}

Eigen::VectorXd mean_of(const std::vector<Eigen::VectorXd>& xs) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

double test_scale(const GaussianOptions& opts, double delta) {
  const auto& c = opts.constants;
  double floor = c.test_scale_floor < 0 ? -c.test_scale_floor * opts.resolved_sep() : c.test_scale_floor;
  return std::max(floor, c.test_scale_factor * delta);
}

// Pair statistics of z against every batch sample.
std::vector<double> pair_statistics(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& batch,
                                    const ProjectionChain& chain, const TestConfig& cfg, const Sampler& base,
                                    const Rng& tests, int workers) {
  std::vector<double> stats(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t j) {
    stats[j] = pair_test(z, batch[j], chain, cfg, base, tests.child(j)).verdict.statistic;
  });
  return stats;
}

bool accepted_mean(const std::vector<double>& stats, const std::vector<Eigen::VectorXd>& batch, double tau,
                   Eigen::VectorXd& out) {
  out = Eigen::VectorXd::Zero(batch.front().size());
  std::size_t n = 0;
  for (std::size_t j = 0; j < batch.size(); ++j)
    if (stats[j] < tau) {
      out += batch[j];
      ++n;
    }
  if (n == 0) return false;
  out /= static_cast<double>(n);
  return true;
}

TestConfig pair_config(const GaussianOptions& opts, double scale) {
  const auto& c = opts.constants;
  return make_test_config(scale, c.t, opts.k, opts.delta, c.reps, Variant::gaussian);
}

int count_in_scope(const GaussianOptions& opts, const DimensionReduction* red, const Checker& ch) {
  if (!opts.oracle || !red) return -1;
  int n = 0;
  for (const auto& mu : opts.oracle->means) n += checker_contains(ch, red->project(mu));
  return n;
}

}  // namespace

Checker Checker::trivial(Eigen::Index d, double r) {
  return Checker{Eigen::MatrixXd::Zero(d, 0), Eigen::VectorXd::Zero(0), r};
}

Checker Checker::with_radius(double radius) const {
  Checker out = *this;
  out.r = radius;
  return out;
}

void Checker::validate() const {
  if (basis.cols() > basis.rows()) fail(ErrorKind::shape, "checker subspace larger than the ambient space");
  if (p.size() != basis.cols()) fail(ErrorKind::shape, "checker center must have one coordinate per basis column");
  if (!(r > 0)) fail(ErrorKind::shape, "checker radius must be positive");
  if (basis.cols() > 0) {
    Eigen::MatrixXd g = basis.transpose() * basis - Eigen::MatrixXd::Identity(basis.cols(), basis.cols());
    if (g.cwiseAbs().maxCoeff() > 1e-10) fail(ErrorKind::shape, "checker basis is not orthonormal");
  }
}

bool checker_contains(const Checker& ch, const Eigen::VectorXd& x) {
  if (x.size() != ch.ambient()) fail(ErrorKind::shape, "point dimension differs from the checker");
  if (ch.dim() == 0) return true;
  return (ch.basis.transpose() * x - ch.p).norm() <= ch.r;
}

Eigen::MatrixXd complement_basis(const Eigen::MatrixXd& basis) {
  const Eigen::Index d = basis.rows();
  const Eigen::Index a = basis.cols();
  Eigen::MatrixXd out(d, d - a);
  Eigen::Index filled = 0;
  for (Eigen::Index i = 0; i < d && filled < d - a; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(d, i);
    for (int pass = 0; pass < 2; ++pass) {
      if (a > 0) e -= basis * (basis.transpose() * e);
      if (filled > 0) e -= out.leftCols(filled) * (out.leftCols(filled).transpose() * e);
    }
    double norm = e.norm();
    if (norm < 1e-6) continue;
    out.col(filled++) = sign_normalized(e / norm);
  }
  if (filled != d - a) fail(ErrorKind::numeric, "could not complete the checker basis");
  return out;
}

std::vector<Eigen::VectorXd> reduce_by_checker(const std::vector<Eigen::VectorXd>& samples, const Checker& ch) {
  ch.validate();
  Eigen::MatrixXd comp = complement_basis(ch.basis);
  std::vector<Eigen::VectorXd> out;
  for (const auto& x : samples)
    if (checker_contains(ch, x)) out.push_back(comp.transpose() * x);
  return out;
}

ReducedSampler::ReducedSampler(const Sampler& inner, Checker ch, bool project, std::size_t max_tries)
    : inner_(inner), ch_(std::move(ch)), max_tries_(max_tries) {
  ch_.validate();
  if (ch_.ambient() != inner_.dim()) fail(ErrorKind::shape, "checker dimension differs from the sampler");
  complement_ = project ? complement_basis(ch_.basis) : Eigen::MatrixXd::Identity(ch_.ambient(), ch_.ambient());
}

void ReducedSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  thread_local Eigen::VectorXd x;
  for (std::size_t i = 0; i < max_tries_; ++i) {
    inner_.draw(rng, x);
    if (checker_contains(ch_, x)) {
      out = complement_.transpose() * x;
      return;
    }
  }
  fail(ErrorKind::sample_size, "checker accepted no sample within the retry budget");
}

double checker_acceptance(const Checker& ch, const Eigen::VectorXd& mu) {
  ch.validate();
  const Eigen::Index a = ch.dim();
  if (a == 0) return 1.0;
  Eigen::VectorXd q = ch.basis.transpose() * mu - ch.p;
  if (a == 1) {
    const double s = std::sqrt(2.0);
    return 0.5 * (std::erf((ch.r - q[0]) / s) - std::erf((-ch.r - q[0]) / s));
  }
  const double lambda = q.squaredNorm();
  const double dof = static_cast<double>(a);
  if (lambda == 0.0) return boost::math::cdf(boost::math::chi_squared(dof), ch.r * ch.r);
  return boost::math::cdf(boost::math::non_central_chi_squared(dof, lambda), ch.r * ch.r);
}

TruncatedWeights truncated_weights_oracle(const MixtureSpec& spec, const Checker& ch, double theta) {
  spec.validate();
  ch.validate();
  TruncatedWeights out;
  double total = 0.0;
  for (std::size_t i = 0; i < spec.k(); ++i) {
    if (!checker_contains(ch.with_radius(ch.r + theta), spec.means[i])) continue;
    double acc = checker_acceptance(ch, spec.means[i]);
    out.relevant.push_back(i);
    out.acceptance.push_back(acc);
    out.weights.push_back(spec.weights[i] * acc);
    total += spec.weights[i] * acc;
  }
  if (total > 0)
    for (double& w : out.weights) w /= total;
  return out;
}

bool is_signal_direction(const std::vector<Eigen::VectorXd>& samples, const Eigen::VectorXd& v, double p_level,
                         double delta, double* theta) {
  if (!(p_level > 0 && p_level <= 1)) fail(ErrorKind::shape, "p_level must be in (0, 1]");
  const auto need = static_cast<std::size_t>(std::ceil(20.0 / p_level));
  if (samples.size() < need)
    fail(ErrorKind::sample_size, "signal check needs at least " + std::to_string(need) + " samples");
  const std::size_t n = samples.size();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i].size() != v.size()) fail(ErrorKind::shape, "direction dimension differs from the samples");
    proj[i] = v.dot(samples[i]);
  }
  std::sort(proj.begin(), proj.end());
  auto q = static_cast<std::size_t>(std::ceil(0.95 * p_level * static_cast<double>(n)));
  q = std::clamp<std::size_t>(q, 1, n);
  // q-th smallest and q-th largest bound the best split.
  double lo = proj[q - 1];
  double hi = proj[n - q];
  if (hi - lo < 2 * delta) return false;
  if (theta) *theta = 0.5 * (lo + hi);
  return true;
}

GaussianConstants GaussianConstants::asymptotic() { return GaussianConstants{}; }

GaussianConstants GaussianConstants::desk() {
  GaussianConstants c;
  c.test_scale_floor = -1.5;
  c.gamma_max = 2;
  c.vote_radius = 0.5;
  c.good_fraction = 0.5;
  c.isolate_weight_scale = 1.0;
  c.project_reductions = false;
  return c;
}

#define PMIX_GAUSSIAN_CONSTANTS(X)                                                                            \
  X(contains_radius) X(keep_radius) X(reduce_radius) X(core_radius) X(max_sep_offset) X(gamma_max) X(rounds) \
  X(grid_ratio) X(test_scale_factor) X(test_scale_floor) X(check_mass) X(check_delta) X(max_sep_signal)      \
  X(refine_signal) X(split_gap) X(good_fraction) X(vote_radius) X(dedup_radius) X(support_fraction)          \
  X(band_factor) X(isolate_min_weight) X(isolate_weight_scale) X(split_distance) X(t) X(reps) X(n_per_stage) \
  X(trials) X(batch) X(probes) X(signal_samples) X(select_samples) X(assign_samples) X(estimate_samples)     \
  X(initial_samples) X(mean_passes) X(project_reductions)

void to_json(nlohmann::json& j, const GaussianConstants& c) {
  j = nlohmann::json::object();
#define PMIX_PUT(name) j[#name] = c.name;
  PMIX_GAUSSIAN_CONSTANTS(PMIX_PUT)
#undef PMIX_PUT
}

void from_json(const nlohmann::json& j, GaussianConstants& c) {
  if (!j.is_object()) fail(ErrorKind::config, "constants must be an object");
  nlohmann::json known;
  to_json(known, c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail(ErrorKind::config, "unknown constant: " + key);
  try {
#define PMIX_GET(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name);
    PMIX_GAUSSIAN_CONSTANTS(PMIX_GET)
#undef PMIX_GET
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("constants: ") + e.what());
  }
}

#undef PMIX_GAUSSIAN_CONSTANTS

void to_json(nlohmann::json& j, const DiagnosticEvent& e) {
  j = nlohmann::json{{"level", e.level}, {"action", e.action}, {"checker_dim", e.checker_dim}, {"radius", e.radius}};
  if (e.means_in_scope >= 0) j["means_in_scope"] = e.means_in_scope;
}

std::string diagnostics_jsonl(const std::vector<DiagnosticEvent>& events) {
  std::string out;
  for (const auto& e : events) out += nlohmann::json(e).dump() + "\n";
  return out;
}

double GaussianOptions::log_k() const {
  return std::max(1.0, std::log(static_cast<double>(k) / w_min));
}

double GaussianOptions::theta() const { return std::pow(log_k(), (1.0 + c) / 2.0); }

double GaussianOptions::beta() const { return std::pow(log_k(), (1.0 + 1.1 * c) / 2.0); }

double GaussianOptions::resolved_sep() const { return sep > 0 ? sep : std::pow(log_k(), 0.5 + c); }

std::size_t GaussianOptions::gamma_max() const {
  if (constants.gamma_max) return constants.gamma_max;
  double ll = std::log(log_k());
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(1e4 * ll)));
}

std::size_t GaussianOptions::rounds() const {
  if (constants.rounds) return constants.rounds;
  return static_cast<std::size_t>(std::ceil(std::pow(log_k(), 1.0 + 0.1 * c)));
}

void GaussianOptions::validate() const {
  const auto& cs = constants;
  if (k < 1) fail(ErrorKind::config, "k must be at least 1");
  if (!(w_min > 0 && w_min <= 1)) fail(ErrorKind::config, "w_min must be in (0, 1]");
  if (!(c > 0)) fail(ErrorKind::config, "c must be positive");
  if (!(alpha > 0)) fail(ErrorKind::config, "alpha must be positive");
  if (!(delta > 0 && delta < 1)) fail(ErrorKind::config, "delta must be in (0, 1)");
  if (sep < 0) fail(ErrorKind::config, "sep must be non-negative");
  if (cs.t < 1 || cs.t > kMaxDegree) fail(ErrorKind::config, "degree must be in [1, 8]");
  if (!(cs.grid_ratio > 1)) fail(ErrorKind::config, "grid_ratio must exceed 1");
  if (cs.reps < 1 || cs.trials < 1 || cs.batch < 1 || cs.probes < 1 || cs.n_per_stage < 1 || cs.select_samples < 2 ||
      cs.assign_samples < 1 || cs.estimate_samples < 1 || cs.initial_samples < 2)
    fail(ErrorKind::config, "sample counts must be positive");
  for (double r : {cs.contains_radius, cs.keep_radius, cs.reduce_radius, cs.core_radius, cs.check_mass, cs.check_delta,
                   cs.max_sep_signal, cs.refine_signal, cs.vote_radius, cs.support_fraction, cs.split_distance})
    if (!(r > 0)) fail(ErrorKind::config, "radius and threshold constants must be positive");
}

double chain_radius(const GaussianOptions& opts) {
  const auto& c = opts.constants;
  double widest = std::max({c.max_sep_offset + static_cast<double>(opts.gamma_max()), c.reduce_radius,
                            static_cast<double>(opts.gamma_max()) + 2.0});
  return opts.beta() + widest * opts.theta();
}

ProjectionChain scope_chain(const Sampler& reduced, std::size_t k, const GaussianOptions& opts, std::uint64_t seed) {
  DifferenceSampler diff(reduced);
  BaseSampler base(BaseDist::gaussian, reduced.dim());
  ChainOptions co{seed, opts.workers, ExpansionMode::subset_sum, opts.log};
  return iterative_projection(diff, base, opts.constants.t, difference_rank(k), opts.constants.n_per_stage, co);
}

SignalDirection find_signal_direction(const Sampler& reduced, const ProjectionChain& chain, double w_star,
                                      double delta_lo, double delta_hi, const GaussianOptions& opts, Rng rng,
                                      const Eigen::MatrixXd& exclude) {
  const auto& c = opts.constants;
  if (exclude.cols() > 0 && exclude.rows() != reduced.dim()) fail(ErrorKind::shape, "excluded basis has the wrong dimension");
  if (chain.np.ambient_dim() != reduced.dim()) fail(ErrorKind::shape, "chain dimension differs from the reduction");
  BaseSampler base(BaseDist::gaussian, reduced.dim());
  auto checks = draw_many(reduced, rng.child(0), c.signal_samples);
  if (delta_hi <= 0) {
    Eigen::VectorXd m = mean_of(checks);
    for (const auto& x : checks) delta_hi = std::max(delta_hi, (x - m).norm());
  }
  if (delta_hi < delta_lo) fail(ErrorKind::no_signal, "sample spread below the requested signal size");
  auto batch = draw_many(reduced, rng.child(1), c.batch);
  const double p_level = c.check_mass * w_star;
  const TestConfig cfg = pair_config(opts, test_scale(opts, delta_lo));

  // Statistics are computed once per trial and re-thresholded for each delta.
  struct Trial {
    std::vector<double> sz, szp;
  };
  std::vector<Trial> trials;
  auto trial = [&](std::size_t i) -> const Trial& {
    while (trials.size() <= i) {
      Rng tr = rng.child(2 + trials.size());
      Rng zr = tr.child(0), zpr = tr.child(1);
      Eigen::VectorXd z = reduced.draw(zr);
      Eigen::VectorXd zp = reduced.draw(zpr);
      trials.push_back({pair_statistics(z, batch, chain, cfg, base, tr.child(2), opts.workers),
                        pair_statistics(zp, batch, chain, cfg, base, tr.child(3), opts.workers)});
    }
    return trials[i];
  };
  for (double delta = delta_hi; delta >= delta_lo * (1 - 1e-12); delta /= c.grid_ratio) {
    const double tau = choose_threshold(test_scale(opts, delta), c.t);
    for (std::size_t i = 0; i < c.trials; ++i) {
      const Trial& tr = trial(i);
      Eigen::VectorXd mu, mup;
      if (!accepted_mean(tr.sz, batch, tau, mu) || !accepted_mean(tr.szp, batch, tau, mup)) continue;
      Eigen::VectorXd diff = mu - mup;
      if (exclude.cols() > 0) diff -= exclude * (exclude.transpose() * diff);
      double norm = diff.norm();
      if (norm < 1e-12) continue;
      double split = 0.0;
      if (is_signal_direction(checks, diff / norm, p_level, c.check_delta * delta, &split))
        return SignalDirection{diff / norm, p_level, c.check_delta * delta, split};
    }
  }
  fail(ErrorKind::no_signal, "no verified signal direction after " + std::to_string(c.trials) + " trials");
}

std::vector<Eigen::VectorXd> full_cluster_bounded(const Sampler& reduced, const ProjectionChain& chain, double w_star,
                                                  const GaussianOptions& opts, Rng rng) {
  const auto& c = opts.constants;
  if (chain.np.ambient_dim() != reduced.dim()) fail(ErrorKind::shape, "chain dimension differs from the reduction");
  const double s = opts.resolved_sep();
  const TestConfig cfg = pair_config(opts, test_scale(opts, s));
  BaseSampler base(BaseDist::gaussian, reduced.dim());
  auto probes = draw_many(reduced, rng.child(0), c.probes);
  auto batch = draw_many(reduced, rng.child(1), c.batch);
  const Rng tests = rng.child(2);

  std::vector<Eigen::VectorXd> cands;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    auto stats = pair_statistics(probes[i], batch, chain, cfg, base, tests.child(i), opts.workers);
    Eigen::VectorXd mu;
    if (accepted_mean(stats, batch, cfg.tau, mu)) cands.push_back(mu);
  }
  const double w = c.isolate_weight_scale > 0 ? c.isolate_weight_scale * w_star
                                              : std::pow(w_star / static_cast<double>(opts.k), 10.0);
  const double support = c.support_fraction * w * static_cast<double>(c.probes);
  // Best-supported candidates vote first.
  std::vector<std::size_t> sup;
  majority_vote(cands, c.vote_radius, 0.0, 0.0, &sup);
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sup[a] > sup[b]; });
  std::vector<Eigen::VectorXd> ranked;
  for (auto i : order) ranked.push_back(cands[i]);
  cands = std::move(ranked);
  auto accepted = majority_vote(cands, c.vote_radius, support, std::max(c.dedup_radius, s / 2), nullptr);
  if (accepted.empty()) fail(ErrorKind::no_signal, "no candidate mean reached the vote threshold");
  std::vector<Eigen::VectorXd> out;
  for (auto idx : accepted) {
    if (out.size() == opts.k) break;
    out.push_back(cands[idx]);
  }
  // Re-average over fresh draws assigned to the nearest candidate.
  for (std::size_t pass = 0; pass < c.mean_passes; ++pass) {
    auto fresh = draw_many(reduced, rng.child(3 + pass), c.assign_samples);
    std::vector<Eigen::VectorXd> sum(out.size(), Eigen::VectorXd::Zero(reduced.dim()));
    std::vector<std::size_t> count(out.size(), 0);
    for (const auto& x : fresh) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < out.size(); ++j)
        if ((x - out[j]).squaredNorm() < (x - out[best]).squaredNorm()) best = j;
      sum[best] += x;
      ++count[best];
    }
    for (std::size_t j = 0; j < out.size(); ++j)
      if (count[j] > 0) out[j] = sum[j] / static_cast<double>(count[j]);
  }
  return out;
}

Assignment cluster_with_means(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& means, double s,
                              double band_factor) {
  return assign_sample(z, means, band_factor * s);
}

SeparationVerdict test_max_separation(const Sampler& mix, const Checker& ch, const ProjectionChain& chain,
                                      const GaussianOptions& opts, Rng rng) {
  const auto& c = opts.constants;
  const double target = c.max_sep_signal * std::pow(opts.log_k(), 4.0);
  for (std::size_t gamma = 1; gamma <= opts.gamma_max(); ++gamma) {
    ReducedSampler red(mix, ch.with_radius((c.max_sep_offset + static_cast<double>(gamma)) * opts.theta()),
                       c.project_reductions);
    Rng gr = rng.child(gamma);
    try {
      auto sig = find_signal_direction(red, chain, opts.w_min, target / c.check_delta, 0.0, opts, gr.child(0));
      auto fresh = draw_many(red, gr.child(1), c.signal_samples);
      if (is_signal_direction(fresh, sig.v, c.max_sep_signal * opts.w_min, target)) return SeparationVerdict::reject;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_signal) throw;
    }
  }
  return SeparationVerdict::accept;
}

Checker refine_checker(const Sampler& mix, const Checker& ch, const ProjectionChain& chain, const GaussianOptions& opts,
                       Rng rng) {
  const auto& c = opts.constants;
  const Eigen::Index a = ch.dim();
  if (a + 1 >= ch.ambient()) fail(ErrorKind::refine_failed, "checker already spans all but one direction");
  const double theta = opts.theta();
  const double beta = opts.beta();
  const double lk4 = std::pow(opts.log_k(), 4.0);

  {
    auto probe = draw_many(mix, rng.child(0), c.select_samples);
    Checker wide = ch.with_radius(c.contains_radius * theta);
    bool any = std::any_of(probe.begin(), probe.end(), [&](const auto& x) { return checker_contains(wide, x); });
    if (!any) fail(ErrorKind::refine_failed, "checker holds no samples");
  }

  const auto gamma = static_cast<double>(1 + rng.child(1).below(opts.gamma_max()));
  ReducedSampler red(mix, ch.with_radius(beta + gamma * theta), c.project_reductions);
  const Eigen::MatrixXd exclude = c.project_reductions ? Eigen::MatrixXd() : ch.basis;
  SignalDirection sig;
  try {
    sig = find_signal_direction(red, chain, opts.w_min, c.refine_signal * lk4 / c.check_delta, 0.0, opts, rng.child(2),
                                exclude);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::no_signal) throw;
    fail(ErrorKind::refine_failed, std::string("no signal direction: ") + e.what());
  }
  Eigen::VectorXd v = red.complement() * sig.v;
  v.normalize();
  Eigen::MatrixXd next(ch.ambient(), a + 1);
  next.leftCols(a) = ch.basis;
  next.col(a) = v;

  Checker keep = ch.with_radius(beta + (gamma + 2) * theta);
  std::vector<Eigen::VectorXd> kept;
  for (auto& x : draw_many(mix, rng.child(3), c.select_samples))
    if (checker_contains(keep, x)) kept.push_back(next.transpose() * x);
  const std::size_t n = kept.size();
  if (n < 2) fail(ErrorKind::refine_failed, "too few samples near the checker");
  const double need = c.good_fraction * opts.w_min * static_cast<double>(n - 1);
  std::size_t lo = n, hi = n;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t near = 0;
    for (std::size_t j = 0; j < n; ++j) near += j != i && (kept[i] - kept[j]).norm() <= theta;
    if (static_cast<double>(near) < need) continue;
    if (lo == n || kept[i][a] < kept[lo][a]) lo = i;
    if (hi == n || kept[i][a] > kept[hi][a]) hi = i;
  }
  if (lo == n || kept[hi][a] - kept[lo][a] < c.split_gap * lk4)
    fail(ErrorKind::refine_failed, "no pair of good samples splits along the signal direction");
  std::size_t pick = rng.child(4).below(2) ? hi : lo;
  return Checker{next, kept[pick], c.contains_radius * theta};
}

bool ComponentTest::accepts(const Eigen::VectorXd& x) const {
  if (!checker_contains(keep, x)) return false;
  return cluster_with_means(complement.transpose() * x, candidates, s, band_factor).index == target;
}

ComponentTest isolate_component(const Sampler& mix, const Checker& ch, const ProjectionChain& chain,
                                const GaussianOptions& opts, Rng rng) {
  const auto& c = opts.constants;
  const double theta = opts.theta();
  ReducedSampler red(mix, ch.with_radius(c.reduce_radius * theta), c.project_reductions);
  auto cands = full_cluster_bounded(red, chain, opts.w_min, opts, rng.child(0));

  ComponentTest test{ch.with_radius(c.keep_radius * theta), red.complement(), cands, 0, opts.resolved_sep(),
                     c.band_factor};
  Checker core = ch.with_radius(c.core_radius * theta);
  std::vector<std::size_t> counts(cands.size(), 0), inner(cands.size(), 0);
  auto fresh = draw_many(mix, rng.child(1), c.assign_samples);
  for (const auto& x : fresh) {
    if (!checker_contains(test.keep, x)) continue;
    auto j = cluster_with_means(test.complement.transpose() * x, cands, test.s, c.band_factor).index;
    ++counts[j];
    inner[j] += checker_contains(core, x);
  }
  const double min_count = c.isolate_min_weight * opts.w_min * static_cast<double>(fresh.size());
  std::size_t best = cands.size();
  for (std::size_t j = 0; j < cands.size(); ++j) {
    if (static_cast<double>(counts[j]) < min_count || 2 * inner[j] < counts[j]) continue;
    if (best == cands.size() || counts[j] > counts[best]) best = j;
  }
  if (best == cands.size()) fail(ErrorKind::isolate_failed, "no cluster with enough weight near the checker");
  test.target = best;
  return test;
}

double split_threshold(std::size_t d, std::size_t k, double w_min, double scale) {
  double r = static_cast<double>(d + k) / w_min;
  return scale * r * r;
}

namespace {

void split_region(const std::vector<Eigen::VectorXd>& samples, SampleRegion region, double limit,
                  std::vector<SampleRegion>& out) {
  const auto& m = region.members;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const Eigen::VectorXd& a = samples[m[i]];
      const Eigen::VectorXd& b = samples[m[j]];
      double dist = (b - a).norm();
      if (dist < limit) continue;
      Eigen::VectorXd u = (b - a) / dist;
      const double pa = u.dot(a), pb = u.dot(b);
      std::vector<double> proj;
      for (auto idx : m) {
        double p = u.dot(samples[idx]);
        if (p >= pa && p <= pb) proj.push_back(p);
      }
      std::sort(proj.begin(), proj.end());
      double gap = -1.0, cut = 0.5 * (pa + pb);
      for (std::size_t q = 1; q < proj.size(); ++q)
        if (proj[q] - proj[q - 1] > gap) {
          gap = proj[q] - proj[q - 1];
          cut = 0.5 * (proj[q] + proj[q - 1]);
        }
      SampleRegion below = region, above = region;
      below.members.clear();
      above.members.clear();
      below.cuts.push_back({u, cut, -1.0});
      above.cuts.push_back({u, cut, 1.0});
      for (auto idx : m) (u.dot(samples[idx]) >= cut ? above : below).members.push_back(idx);
      split_region(samples, std::move(below), limit, out);
      split_region(samples, std::move(above), limit, out);
      return;
    }
  std::vector<Eigen::VectorXd> xs;
  for (auto idx : m) xs.push_back(samples[idx]);
  region.center = mean_of(xs);
  for (auto& x : xs) x -= region.center;
  region.recentered = std::move(xs);
  out.push_back(std::move(region));
}

}  // namespace

std::vector<SampleRegion> reduce_bounded_means(const std::vector<Eigen::VectorXd>& samples, std::size_t k, double w_min,
                                               double scale) {
  if (samples.empty()) fail(ErrorKind::empty_sample, "bounded-means split needs samples");
  const auto d = static_cast<std::size_t>(samples.front().size());
  SampleRegion all;
  all.members.resize(samples.size());
  std::iota(all.members.begin(), all.members.end(), 0);
  std::vector<SampleRegion> out;
  split_region(samples, std::move(all), split_threshold(d, k, w_min, scale), out);
  return out;
}

Eigen::MatrixXd principal_basis(const Eigen::MatrixXd& sigma_m, const Eigen::MatrixXd& sigma_d, Eigen::Index k) {
  const Eigen::Index d = sigma_m.rows();
  if (sigma_m.cols() != d || sigma_d.rows() != d || sigma_d.cols() != d)
    fail(ErrorKind::shape, "covariances must be square and of equal size");
  if (k >= d) return Eigen::MatrixXd::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_m - sigma_d);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "eigensolver did not converge");
  Eigen::MatrixXd out(d, k);
  for (Eigen::Index i = 0; i < k; ++i) out.col(i) = sign_normalized(es.eigenvectors().col(d - 1 - i));
  return out;
}

DimensionReduction reduce_dimension(const std::vector<Eigen::VectorXd>& samples, const Eigen::MatrixXd& sigma_d,
                                    std::size_t k) {
  if (samples.empty()) fail(ErrorKind::empty_sample, "dimension reduction needs samples");
  DimensionReduction out;
  out.center = mean_of(samples);
  const Eigen::Index d = out.center.size();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : samples) {
    Eigen::VectorXd y = x - out.center;
    sigma.noalias() += y * y.transpose();
  }
  sigma /= static_cast<double>(samples.size());
  out.basis = principal_basis(sigma, sigma_d, static_cast<Eigen::Index>(k));
  for (const auto& x : samples) out.projected.push_back(out.project(x));
  return out;
}

FilteredSampler::FilteredSampler(const Sampler& inner, std::vector<Halfspace> cuts, std::size_t max_tries)
    : inner_(inner), cuts_(std::move(cuts)), max_tries_(max_tries) {}

bool FilteredSampler::keeps(const Eigen::VectorXd& x) const {
  for (const auto& h : cuts_)
    if (!h.contains(x)) return false;
  for (const auto& test : removed_)
    if (test(x)) return false;
  return true;
}

void FilteredSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  for (std::size_t i = 0; i < max_tries_; ++i) {
    inner_.draw(rng, out);
    if (keeps(out)) return;
  }
  fail(ErrorKind::sample_size, "filter kept no sample within the retry budget");
}

void ProjectedSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  thread_local Eigen::VectorXd x;
  inner_.draw(rng, x);
  out = red_.project(x);
}

GaussianRun recursive_cluster(const Sampler& mix, const GaussianOptions& opts) {
  opts.validate();
  const auto& c = opts.constants;
  GaussianRun run;
  LearnedMixture& out = run.learned;
  out.t = c.t;
  out.reps = c.reps;
  out.seed = opts.seed;
  out.alpha = opts.alpha;
  out.band = c.band_factor * opts.resolved_sep();
  const Rng root(opts.seed, kGmmStream);

  auto initial = draw_many(mix, root.child(0), c.initial_samples);
  auto regions = reduce_bounded_means(initial, opts.k, opts.w_min, c.split_distance);
  run.regions = regions.size();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(mix.dim(), mix.dim());
  const double regime = std::pow(opts.log_k(), 0.5 + opts.c);
  if (opts.resolved_sep() < regime) out.warnings.push_back("separation below the proven regime");

  std::size_t level = 0;
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    std::vector<Eigen::VectorXd> members;
    for (auto idx : regions[ri].members) members.push_back(initial[idx]);
    const DimensionReduction red = reduce_dimension(members, identity, opts.k);
    FilteredSampler filtered(mix, regions[ri].cuts);
    ProjectedSampler work(filtered, red);
    const Rng region_rng = root.child(1 + ri);

    for (std::size_t step = 0; out.k() < opts.k; ++step, ++level) {
      const Rng lr = region_rng.child(step);
      try {
        {
          auto raw = draw_many(mix, lr.child(0), c.assign_samples);
          std::size_t kept = 0;
          for (const auto& x : raw) kept += filtered.keeps(x);
          if (static_cast<double>(kept) < 0.5 * opts.w_min * static_cast<double>(raw.size())) break;
        }
        GaussianOptions lo = opts;
        lo.k = opts.k - out.k();
        const double theta = lo.theta();
        auto event = [&](const char* action, const Checker& ch) {
          run.diagnostics.push_back({level, action, ch.dim(), ch.r, count_in_scope(opts, &red, ch)});
          if (opts.log) opts.log(nlohmann::json(run.diagnostics.back()).dump());
        };
        auto chain_for = [&](const Checker& ch, std::uint64_t id) {
          ReducedSampler scope(work, ch.with_radius(chain_radius(lo)), c.project_reductions);
          return scope_chain(scope, lo.k, lo, lr.child(1).child(id).key());
        };

        Checker ch = Checker::trivial(work.dim(), c.contains_radius * theta);
        ProjectionChain chain = chain_for(ch, 0);
        for (std::size_t round = 0; round < lo.rounds(); ++round) {
          Rng rr = lr.child(2).child(round);
          if (test_max_separation(work, ch, chain, lo, rr.child(0)) == SeparationVerdict::accept) {
            event("accept", ch);
            break;
          }
          try {
            ch = refine_checker(work, ch, chain, lo, rr.child(1));
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::refine_failed) throw;
            out.warnings.push_back("level " + std::to_string(level) + ": " + e.what());
            break;
          }
          event("refine", ch);
          chain = chain_for(ch, round + 1);
        }
        ComponentTest test = isolate_component(work, ch, chain, lo, lr.child(3));
        event("isolate", ch.with_radius(c.keep_radius * theta));

        const std::size_t want = std::max(c.estimate_samples,
                                          static_cast<std::size_t>(std::ceil(4.0 * static_cast<double>(mix.dim()) /
                                                                             (opts.alpha * opts.alpha))));
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(mix.dim());
        std::size_t hit = 0, raw = 0;
        Rng er = lr.child(4);
        Eigen::VectorXd x;
        const std::size_t cap = static_cast<std::size_t>(std::ceil(4.0 * static_cast<double>(want) / opts.w_min));
        while (hit < want && raw < cap) {
          Rng xr = er.child(raw++);
          mix.draw(xr, x);
          if (!filtered.keeps(x) || !test.accepts(red.project(x))) continue;
          sum += x;
          ++hit;
        }
        if (hit == 0) fail(ErrorKind::isolate_failed, "component test accepted no sample");
        out.means.push_back(sum / static_cast<double>(hit));
        out.weights.push_back(static_cast<double>(hit) / static_cast<double>(raw));
        filtered.remove([&red, test](const Eigen::VectorXd& y) { return test.accepts(red.project(y)); });
      } catch (const Error& e) {
        run.partial = true;
        out.warnings.push_back("level " + std::to_string(level) + ": " + e.what());
        break;
      }
    }
  }
  if (out.k() != opts.k)
    out.warnings.push_back("learned " + std::to_string(out.k()) + " components, expected " + std::to_string(opts.k));
  return run;
}

void to_json(nlohmann::json& j, const GaussianRun& run) {
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& e : run.diagnostics) diag.push_back(e);
  j = nlohmann::json{{"learned", run.learned}, {"diagnostics", diag}, {"regions", run.regions}, {"partial", run.partial}};
}

}  // namespace pmix
