#include "pmix/poincare_cluster.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pmix/error.hpp"
#include "pmix/parallel.hpp"

namespace pmix {

namespace {

constexpr std::uint64_t kProbeStream = 0x50524f4245;
constexpr std::uint64_t kBatchStream = 0x4241544348;
constexpr std::uint64_t kTestStream = 0x5445535453;
constexpr std::uint64_t kWeightStream = 0x57474854;

std::vector<Eigen::VectorXd> draw_many(const Sampler& s, std::uint64_t seed, std::uint64_t stream, std::size_t n) {
  std::vector<Eigen::VectorXd> out(n);
  Rng root(seed, stream);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.child(i);
    s.draw(rng, out[i]);
  }
  return out;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void DifferenceSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  thread_local Eigen::VectorXd other;
  inner_.draw(rng, out);
  inner_.draw(rng, other);
  out = (out - other) / std::sqrt(2.0);
}

MixtureSpec difference_spec(const MixtureSpec& spec) {
  spec.validate();
  MixtureSpec out;
  out.base = spec.base;
  double same = 0.0;
  for (double w : spec.weights) same += w * w;
  out.weights.push_back(same);
  out.means.push_back(Eigen::VectorXd::Zero(spec.dim()));
  for (std::size_t i = 0; i < spec.k(); ++i)
    for (std::size_t j = 0; j < spec.k(); ++j)
      if (i != j) {
        out.weights.push_back(spec.weights[i] * spec.weights[j]);
        out.means.push_back((spec.means[i] - spec.means[j]) / std::sqrt(2.0));
      }
  double total = 0.0;
  for (double w : out.weights) total += w;
  for (double& w : out.weights) w /= total;
  return out;
}

Eigen::Index difference_rank(std::size_t k) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(k * (k - 1) / 2));
}

std::size_t PoincareOptions::resolved_probes() const {
  return probes ? probes : static_cast<std::size_t>(std::ceil(20.0 * static_cast<double>(k) / w_min));
}

std::size_t PoincareOptions::resolved_batch() const {
  return batch ? batch : static_cast<std::size_t>(std::ceil(50.0 * static_cast<double>(k) / w_min));
}

double PoincareOptions::resolved_band() const {
  if (band > 0) return band;
  return std::max(1.0, std::pow(std::log(static_cast<double>(k) / w_min), 1.0 + 0.5 * c));
}

void PoincareOptions::validate() const {
  if (k < 1) fail(ErrorKind::config, "k must be at least 1");
  if (!(w_min > 0 && w_min <= 1)) fail(ErrorKind::config, "w_min must be in (0, 1]");
  if (!(sep > 0)) fail(ErrorKind::config, "sep must be positive");
  if (!(alpha > 0)) fail(ErrorKind::config, "alpha must be positive");
  if (!(delta > 0 && delta < 1)) fail(ErrorKind::config, "delta must be in (0, 1)");
  if (reps < 1) fail(ErrorKind::config, "reps must be at least 1");
  if (t > kMaxDegree) fail(ErrorKind::config, "degree above the cap of 8");
  if (n_per_stage < 1) fail(ErrorKind::config, "n_per_stage must be positive");
  if (!(vote_radius > 0) || !(support_fraction > 0)) fail(ErrorKind::config, "vote constants must be positive");
}

PoincareRun learn_poincare(const Sampler& mix, const Sampler& base, const PoincareOptions& opts) {
  opts.validate();
  std::size_t t = opts.t;
  bool capped = false;
  if (t == 0) {
    auto choice = choose_degree(opts.sep, opts.k, opts.w_min, opts.delta, opts.variant);
    t = choice.t;
    capped = choice.capped;
  }
  DifferenceSampler diff(mix);
  DifferenceSampler dbase(base);
  ChainOptions co{opts.seed, opts.workers, opts.mode, opts.log};
  ProjectionChain chain;
  try {
    chain = iterative_projection(diff, dbase, t, difference_rank(opts.k), opts.n_per_stage, co);
  } catch (const Error& e) {
    fail(e.kind(), std::string("building the difference chain: ") + e.what());
  }
  auto run = learn_poincare_with_chain(mix, base, std::move(chain), opts);
  if (capped) {
    run.learned.degree_capped = true;
    run.learned.warnings.push_back("degree capped at 8");
  }
  return run;
}

PoincareRun learn_poincare_with_chain(const Sampler& mix, const Sampler& base, ProjectionChain chain,
                                      const PoincareOptions& opts) {
  opts.validate();
  if (chain.np.ambient_dim() != mix.dim()) fail(ErrorKind::shape, "chain dimension differs from the sample dimension");
  PoincareRun run;
  run.chain = std::move(chain);
  const std::size_t t = run.chain.np.stage_count();
  TestConfig cfg = make_test_config(opts.sep, t, opts.k, opts.delta, opts.reps, opts.variant);
  cfg.mode = opts.mode;
  DifferenceSampler dbase(base);

  LearnedMixture& out = run.learned;
  out.t = t;
  out.reps = opts.reps;
  out.seed = opts.seed;
  out.alpha = opts.alpha;
  out.band = opts.resolved_band();
  out.guarantee_void = cfg.guarantee_void;
  const double regime = std::pow(std::log(static_cast<double>(opts.k) / opts.w_min), 1.0 + opts.c);
  if (opts.sep < regime) out.warnings.push_back("separation below the proven regime");
  if (cfg.guarantee_void) out.warnings.push_back("threshold below the zero-length bound");

  const std::size_t l = opts.resolved_probes();
  const std::size_t m = opts.resolved_batch();
  auto probes = draw_many(mix, opts.seed, kProbeStream, l);
  auto batch = draw_many(mix, opts.seed, kBatchStream, m);
  const Rng tests(opts.seed, kTestStream);

  std::vector<Eigen::VectorXd> sums(l, Eigen::VectorXd::Zero(mix.dim()));
  std::vector<std::size_t> counts(l, 0);
  parallel_for(l, opts.workers, [&](std::size_t i) {
    Rng probe_tests = tests.child(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (pair_test(probes[i], batch[j], run.chain, cfg, dbase, probe_tests.child(j)).accept) {
        sums[i] += batch[j];
        ++counts[i];
      }
    }
  });
  for (std::size_t i = 0; i < l; ++i) {
    if (counts[i] == 0) continue;
    run.ledger.candidates.push_back(sums[i] / static_cast<double>(counts[i]));
    run.ledger.accepted_counts.push_back(counts[i]);
  }
  if (opts.log) opts.log("candidates=" + std::to_string(run.ledger.candidates.size()) + " probes=" + std::to_string(l) +
                         " batch=" + std::to_string(m));

  const double min_support = opts.support_fraction * opts.w_min * static_cast<double>(l);
  run.ledger.accepted = majority_vote(run.ledger.candidates, opts.vote_radius * opts.alpha, min_support, opts.alpha,
                                      &run.ledger.support);
  if (run.ledger.accepted.empty()) fail(ErrorKind::no_signal, "no candidate reached the vote threshold");
  for (auto idx : run.ledger.accepted) out.means.push_back(run.ledger.candidates[idx]);
  if (out.means.size() != opts.k)
    out.warnings.push_back("learned " + std::to_string(out.means.size()) + " components, expected " + std::to_string(opts.k));

  const std::size_t n_w = opts.weight_samples ? opts.weight_samples : m;
  auto fresh = draw_many(mix, opts.seed, kWeightStream, n_w);
  std::vector<double> tally(out.means.size(), 0.0);
  std::size_t ambiguous = 0;
  for (const auto& z : fresh) {
    auto a = assign_sample(z, out.means, out.band);
    tally[a.index] += 1.0;
    ambiguous += a.ambiguous;
  }
  for (double& w : tally) w /= static_cast<double>(n_w);
  out.weights = tally;
  out.ambiguous_fraction = static_cast<double>(ambiguous) / static_cast<double>(n_w);
  return run;
}

LearnedMixture learn_means(const Sampler& mix, const Sampler& base, const PoincareOptions& opts) {
  return learn_poincare(mix, base, opts).learned;
}

std::vector<std::size_t> majority_vote(const std::vector<Eigen::VectorXd>& candidates, double radius,
                                       double min_support, double separation, std::vector<std::size_t>* support) {
  const std::size_t n = candidates.size();
  std::vector<std::size_t> sup(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sup[i] += (candidates[i] - candidates[j]).norm() <= radius;
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<double>(sup[i]) < min_support) continue;
    bool far = true;
    for (auto a : accepted) far = far && (candidates[i] - candidates[a]).norm() >= separation;
    if (far) accepted.push_back(i);
  }
  if (support) *support = std::move(sup);
  return accepted;
}

Assignment assign_sample(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& means, double band) {
  if (means.empty()) fail(ErrorKind::shape, "assignment needs at least one mean");
  const std::size_t k = means.size();
  if (k == 1) return {0, false};
  std::vector<Eigen::VectorXd> dirs;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      Eigen::VectorXd v = means[a] - means[b];
      double norm = v.norm();
      if (norm > 0) dirs.push_back(v / norm);
    }
  std::vector<double> worst(k, 0.0);
  std::size_t qualifying = 0, only = 0;
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd offset = means[j] - z;
    for (const auto& v : dirs) worst[j] = std::max(worst[j], std::abs(v.dot(offset)));
    if (worst[j] <= band) {
      ++qualifying;
      only = j;
    }
  }
  if (qualifying == 1) return {only, false};
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (worst[j] < worst[best]) best = j;
  return {best, true};
}

Assignment assign_sample(const Eigen::VectorXd& z, const LearnedMixture& learned, double band) {
  return assign_sample(z, learned.means, band);
}

std::string assignments_csv(const std::vector<Assignment>& assignments) {
  std::ostringstream out;
  out << "id,assigned,flags\n";
  for (std::size_t i = 0; i < assignments.size(); ++i)
    out << i << ',' << assignments[i].index << ',' << (assignments[i].ambiguous ? "ambiguous" : "") << '\n';
  return out.str();
}

void to_json(nlohmann::json& j, const LearnedMixture& m) {
  nlohmann::json means = nlohmann::json::array();
  for (const auto& mu : m.means) means.push_back(to_vec(mu));
  j = nlohmann::json{{"means", means},
                     {"weights", m.weights},
                     {"t", m.t},
                     {"reps", m.reps},
                     {"seed", m.seed},
                     {"alpha", m.alpha},
                     {"band", m.band},
                     {"ambiguous_fraction", m.ambiguous_fraction},
                     {"degree_capped", m.degree_capped},
                     {"guarantee_void", m.guarantee_void},
                     {"warnings", m.warnings}};
}

void from_json(const nlohmann::json& j, LearnedMixture& m) {
  try {
    m = LearnedMixture{};
    for (const auto& mu : j.at("means")) {
      auto v = mu.get<std::vector<double>>();
      m.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    m.weights = j.at("weights").get<std::vector<double>>();
    m.t = j.value("t", std::size_t{0});
    m.reps = j.value("reps", std::size_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    m.alpha = j.value("alpha", 0.0);
    m.band = j.value("band", 0.0);
    m.ambiguous_fraction = j.value("ambiguous_fraction", 0.0);
    m.degree_capped = j.value("degree_capped", false);
    m.guarantee_void = j.value("guarantee_void", false);
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("learned mixture: ") + e.what());
  }
  if (m.means.size() != m.weights.size()) fail(ErrorKind::config, "learned mixture: means and weights differ in count");
}

void to_json(nlohmann::json& j, const VoteLedger& v) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : v.candidates) cands.push_back(to_vec(c));
  j = nlohmann::json{{"candidates", cands}, {"accepted_counts", v.accepted_counts}, {"support", v.support}, {"accepted", v.accepted}};
}

}  // namespace pmix
