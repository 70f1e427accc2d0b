#include "pmix/moment_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pmix/error.hpp"
#include "pmix/parallel.hpp"
#include "pmix/poly_estimators.hpp"
#include "pmix/tensor_core.hpp"

namespace pmix {

namespace {

constexpr std::size_t kBlock = 64;

struct Spectrum {
  Eigen::MatrixXd rows;
  std::vector<double> magnitudes;  // all |eigenvalues|, descending
};

Eigen::VectorXd sign_normalized(Eigen::VectorXd v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg]) * (1 + 1e-12)) arg = i;
  if (v[arg] < 0) v = -v;
  return v;
}

Spectrum spectrum(const Eigen::MatrixXd& M, Eigen::Index k) {
  if (M.rows() != M.cols()) fail(ErrorKind::shape, "moment matrix must be square");
  if (!M.allFinite()) fail(ErrorKind::numeric, "non-finite moment matrix entries");
  if (M.rows() > 10000) fail(ErrorKind::size_limit, "eigendecomposition limited to m <= 1e4");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "eigensolver did not converge");
  const Eigen::Index m = M.rows();
  std::vector<Eigen::VectorXd> vecs;
  for (Eigen::Index i = 0; i < m; ++i) vecs.push_back(sign_normalized(es.eigenvectors().col(i)));
  const Eigen::VectorXd& lam = es.eigenvalues();
  double top = lam.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    double la = std::abs(lam[a]), lb = std::abs(lam[b]);
    if (std::abs(la - lb) > 1e-12 * top) return la > lb;
    const auto& va = vecs[static_cast<std::size_t>(a)];
    const auto& vb = vecs[static_cast<std::size_t>(b)];
    return std::lexicographical_compare(vb.data(), vb.data() + vb.size(), va.data(), va.data() + va.size());
  });
  Spectrum out;
  for (auto i : order) out.magnitudes.push_back(std::abs(lam[i]));
  Eigen::Index keep = 0;
  while (keep < std::min(k, m) && out.magnitudes[static_cast<std::size_t>(keep)] > 1e-12 * top) ++keep;
  keep = std::max<Eigen::Index>(keep, 1);
  out.rows.resize(keep, m);
  for (Eigen::Index r = 0; r < keep; ++r) out.rows.row(r) = vecs[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])].transpose();
  return out;
}

StageDiagnostics diagnose(std::size_t stage, std::size_t samples, const Spectrum& sp) {
  StageDiagnostics d;
  d.stage = stage;
  d.samples_used = samples;
  d.rank = sp.rows.rows();
  const auto r = static_cast<std::size_t>(d.rank);
  for (std::size_t i = 0; i < std::min(sp.magnitudes.size(), r + 2); ++i) d.leading_eigenvalues.push_back(sp.magnitudes[i]);
  d.spectral_gap = r < sp.magnitudes.size() && sp.magnitudes[r] > 0 ? sp.magnitudes[r - 1] / sp.magnitudes[r]
                                                                  : std::numeric_limits<double>::infinity();
  return d;
}

std::string log_line(const StageDiagnostics& d) {
  std::ostringstream os;
  os << "stage=" << d.stage << " samples=" << d.samples_used << " rank=" << d.rank << " gap=" << d.spectral_gap;
  if (!d.leading_eigenvalues.empty()) os << " top=" << d.leading_eigenvalues.front();
  return os.str();
}

}  // namespace

MomentMatrixEstimate estimate_moment_matrix(const Sampler& mix, const Sampler& base, std::size_t s,
                                            const NestedProjection& prev, std::size_t n, const MomentOptions& opts) {
  if (n == 0) fail(ErrorKind::empty_sample, "moment estimate needs at least one sample");
  if (s < 1 || prev.stage_count() != s - 1)
    fail(ErrorKind::shape, "degree-" + std::to_string(2 * s) + " estimate needs a chain of " + std::to_string(s - 1) +
                               " stages");
  const Eigen::Index d = mix.dim();
  if (base.dim() != d || prev.ambient_dim() != d) fail(ErrorKind::shape, "sampler and chain dimensions differ");
  const std::size_t t = 2 * s;
  const Eigen::Index m = d * prev.output_dim();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  const std::size_t terms = 2 * ((std::size_t{1} << t) - 1);
  std::vector<Eigen::MatrixXd> partial(blocks);
  const Rng root(opts.seed, opts.stream);

  parallel_for(blocks, opts.workers, [&](std::size_t b) {
    const std::size_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(2 * t));
    Eigen::VectorXd tmp(d);
    Eigen::MatrixXd V;
    Eigen::VectorXd W;
    PowerEvaluator eval(prev);
    Eigen::VectorXd lifted(m);
    if (opts.mode == ExpansionMode::subset_sum) {
      V.resize(static_cast<Eigen::Index>((hi - lo) * terms), m);
      W.resize(V.rows());
    }
    Eigen::Index row = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = root.child(i);
      mix.draw(rng, tmp);
      block.col(0) = tmp;
      for (Eigen::Index j = 1; j < block.cols(); ++j) {
        base.draw(rng, tmp);
        block.col(j) = tmp;
      }
      if (opts.mode == ExpansionMode::subset_sum) {
        for_each_symmetric_term(block, t, [&](double w, const Eigen::VectorXd& u) {
          eval.lifted(u.data(), lifted.data());
          V.row(row) = lifted.transpose();
          W[row++] = w;
        });
      } else {
        std::vector<Eigen::VectorXd> cols;
        for (Eigen::Index j = 0; j < block.cols(); ++j) cols.push_back(block.col(j));
        for (const auto& term : r_poly_terms(cols, t).terms) {
          std::span<const Eigen::VectorXd> f(term.factors);
          Eigen::VectorXd left = apply_kron_block(prev, f[0], f.subspan(1, s - 1));
          Eigen::VectorXd right = apply_kron_block(prev, f[s], f.subspan(s + 1, s - 1));
          K.noalias() += term.coeff * left * right.transpose();
        }
      }
    }
    if (opts.mode == ExpansionMode::subset_sum) K.noalias() += V.transpose() * W.asDiagonal() * V;
    partial[b] = std::move(K);
  });

  MomentMatrixEstimate out;
  out.matrix = Eigen::MatrixXd::Zero(m, m);
  for (const auto& K : partial) out.matrix += K;
  out.matrix /= static_cast<double>(n);
  out.matrix = (0.5 * (out.matrix + out.matrix.transpose())).eval();
  out.samples_used = n;
  out.degree = t;
  if (!out.matrix.allFinite()) fail(ErrorKind::numeric, "moment estimate overflowed");
  return out;
}

Eigen::MatrixXd exact_moment_matrix(const MixtureSpec& spec, const NestedProjection& prev) {
  spec.validate();
  const Eigen::Index m = spec.dim() * prev.output_dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < spec.k(); ++i) {
    Eigen::VectorXd v = kron(spec.means[i], apply_power(prev, spec.means[i]));
    A.noalias() += spec.weights[i] * v * v.transpose();
  }
  return A;
}

Eigen::MatrixXd top_k_subspace(const Eigen::MatrixXd& M, Eigen::Index k) {
  if (k < 1) fail(ErrorKind::shape, "subspace rank must be positive");
  return spectrum(M, k).rows;
}

ProjectionChain iterative_projection(const Sampler& mix, const Sampler& base, std::size_t t, Eigen::Index rank,
                                     std::size_t n_per_stage, const ChainOptions& opts) {
  if (t < 1) fail(ErrorKind::shape, "chain degree must be at least 1");
  const Eigen::Index d = mix.dim();
  ProjectionChain chain;
  chain.np = NestedProjection(d, {Eigen::MatrixXd::Identity(d, d)});
  chain.stages.push_back({1, 0, d, std::vector<double>(static_cast<std::size_t>(d), 1.0), 1.0});
  if (opts.log) opts.log(log_line(chain.stages.back()));
  for (std::size_t s = 2; s <= t; ++s) {
    MomentOptions mo{opts.seed, 0x5354414745ULL + s, opts.workers, opts.mode};
    auto est = estimate_moment_matrix(mix, base, s, chain.np, n_per_stage, mo);
    Spectrum sp = spectrum(est.matrix, rank);
    chain.stages.push_back(diagnose(s, est.samples_used, sp));
    if (opts.log) opts.log(log_line(chain.stages.back()));
    chain.np = chain.np.extended(sp.rows);
  }
  return chain;
}

ProjectionChain iterative_projection_exact(const MixtureSpec& spec, std::size_t t, Eigen::Index rank) {
  if (t < 1) fail(ErrorKind::shape, "chain degree must be at least 1");
  const Eigen::Index d = spec.dim();
  ProjectionChain chain;
  chain.np = NestedProjection(d, {Eigen::MatrixXd::Identity(d, d)});
  chain.stages.push_back({1, 0, d, std::vector<double>(static_cast<std::size_t>(d), 1.0), 1.0});
  for (std::size_t s = 2; s <= t; ++s) {
    Spectrum sp = spectrum(exact_moment_matrix(spec, chain.np), rank);
    chain.stages.push_back(diagnose(s, 0, sp));
    chain.np = chain.np.extended(sp.rows);
  }
  return chain;
}

PaddedSampler::PaddedSampler(const Sampler& inner, Eigen::Index dim) : inner_(inner), dim_(dim) {
  if (dim < inner.dim()) fail(ErrorKind::shape, "padding cannot shrink the dimension");
}

void PaddedSampler::draw(Rng& rng, Eigen::VectorXd& out) const {
  Eigen::VectorXd head;
  inner_.draw(rng, head);
  out.resize(dim_);
  out.head(head.size()) = head;
  for (Eigen::Index i = head.size(); i < dim_; ++i) out[i] = rng.normal();
}

void to_json(nlohmann::json& j, const StageDiagnostics& d) {
  j = nlohmann::json{{"stage", d.stage},
                     {"samples", d.samples_used},
                     {"rank", d.rank},
                     {"leading_eigenvalues", d.leading_eigenvalues},
                     {"spectral_gap", std::isfinite(d.spectral_gap) ? nlohmann::json(d.spectral_gap) : nlohmann::json("inf")}};
}

void to_json(nlohmann::json& j, const ProjectionChain& chain) {
  j = nlohmann::json{{"projection", chain.np}, {"diagnostics", chain.stages}};
}

void from_json(const nlohmann::json& j, ProjectionChain& chain) {
  chain.np = j.at("projection").get<NestedProjection>();
  chain.stages.clear();
  for (const auto& s : j.at("diagnostics")) {
    StageDiagnostics d;
    d.stage = s.at("stage").get<std::size_t>();
    d.samples_used = s.at("samples").get<std::size_t>();
    d.rank = s.at("rank").get<Eigen::Index>();
    d.leading_eigenvalues = s.at("leading_eigenvalues").get<std::vector<double>>();
    const auto& gap = s.at("spectral_gap");
    d.spectral_gap = gap.is_string() ? std::numeric_limits<double>::infinity() : gap.get<double>();
    chain.stages.push_back(std::move(d));
  }
  if (chain.stages.size() != chain.np.stage_count()) fail(ErrorKind::config, "diagnostics do not match stage count");
}

}  // namespace pmix
