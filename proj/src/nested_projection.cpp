#include "pmix/nested_projection.hpp"

#include <cmath>
#include <string>


#include "pmix/error.hpp"
#include "pmix/tensor_core.hpp"

namespace pmix {

namespace {
constexpr double kDriftTolerance = 1e-8;
constexpr const char* kFormat = "pmix.nested_projection";
constexpr int kVersion = 1;
}  // namespace

Eigen::MatrixXd orthonormalize_rows(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return m;
  if (m.rows() > m.cols()) fail(ErrorKind::shape, "more rows than columns; rows cannot be orthonormal");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.transpose());
  Eigen::MatrixXd R = qr.matrixQR().topRows(m.rows()).triangularView<Eigen::Upper>();
  double scale = m.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (std::abs(R(i, i)) <= 1e-12 * std::max(scale, 1e-300))
      fail(ErrorKind::numeric, "stage rows are linearly dependent");
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m.cols(), m.rows());
  // Keep each row's orientation: flip columns where R has a negative diagonal.
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (R(i, i) < 0) Q.col(i) *= -1.0;
  return Q.transpose();
}

NestedProjection::NestedProjection(Eigen::Index ambient_dim, std::vector<Eigen::MatrixXd> stages) : d_(ambient_dim) {
  if (ambient_dim < 1) fail(ErrorKind::shape, "ambient dimension must be positive");
  for (auto& s : stages) append(std::move(s));
}

NestedProjection NestedProjection::identity(Eigen::Index d, std::size_t stages) {
  NestedProjection np(d);
  Eigen::Index width = 1;
  for (std::size_t j = 0; j < stages; ++j) {
    width *= d;
    np.append(Eigen::MatrixXd::Identity(width, width));
  }
  return np;
}

Eigen::Index NestedProjection::output_dim() const { return stages_.empty() ? 1 : stages_.back().rows(); }

Eigen::Index NestedProjection::width(std::size_t j) const { return j == 0 ? 1 : stages_.at(j - 1).rows(); }

void NestedProjection::append(Eigen::MatrixXd stage) {
  const Eigen::Index expect = d_ * output_dim();
  if (stage.cols() != expect)
    fail(ErrorKind::shape, "stage " + std::to_string(stages_.size() + 1) + " has " + std::to_string(stage.cols()) +
                               " columns, expected " + std::to_string(expect));
  if (stage.rows() < 1) fail(ErrorKind::shape, "stage without rows");
  if (!stage.allFinite()) fail(ErrorKind::numeric, "non-finite stage entries");
  Eigen::MatrixXd gram = stage * stage.transpose();
  double drift = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (drift > kDriftTolerance) stage = orthonormalize_rows(stage);
  stages_.push_back(std::move(stage));
}

NestedProjection NestedProjection::extended(Eigen::MatrixXd next) const {
  NestedProjection out = *this;
  out.append(std::move(next));
  return out;
}

NestedProjection NestedProjection::prefix(std::size_t s) const {
  if (s > stages_.size()) fail(ErrorKind::shape, "prefix longer than the chain");
  NestedProjection out(d_);
  out.stages_.assign(stages_.begin(), stages_.begin() + static_cast<std::ptrdiff_t>(s));
  return out;
}

double NestedProjection::max_orthonormality_error() const {
  double err = 0.0;
  for (const auto& s : stages_) {
    Eigen::MatrixXd gram = s * s.transpose();
    err = std::max(err, (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff());
  }
  return err;
}

namespace {

// w <- P * flat(u ⊗ w) without forming the Kronecker vector.
Eigen::VectorXd stage_step(const Eigen::MatrixXd& P, const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  const Eigen::Index c = w.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(P.rows());
  for (Eigen::Index a = 0; a < u.size(); ++a)
    if (u[a] != 0.0) out.noalias() += u[a] * (P.middleCols(a * c, c) * w);
  return out;
}

void check_factors(const NestedProjection& np, std::span<const Eigen::VectorXd> factors, std::size_t expect) {
  if (factors.size() != expect)
    fail(ErrorKind::shape, "expected " + std::to_string(expect) + " factors, got " + std::to_string(factors.size()));
  for (const auto& f : factors)
    if (f.size() != np.ambient_dim()) fail(ErrorKind::shape, "factor dimension differs from the ambient dimension");
}

}  // namespace

Eigen::VectorXd apply_rank1(const NestedProjection& np, std::span<const Eigen::VectorXd> factors) {
  const std::size_t s = np.stage_count();
  check_factors(np, factors, s);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  for (std::size_t j = 1; j <= s; ++j) w = stage_step(np.stage(j), factors[s - j], w);
  return w;
}

Eigen::VectorXd apply_power(const NestedProjection& np, const Eigen::VectorXd& u) {
  if (u.size() != np.ambient_dim()) fail(ErrorKind::shape, "factor dimension differs from the ambient dimension");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  for (std::size_t j = 1; j <= np.stage_count(); ++j) w = stage_step(np.stage(j), u, w);
  return w;
}

PowerEvaluator::PowerEvaluator(const NestedProjection& np) : np_(np) {
  std::size_t widest = 1;
  for (std::size_t j = 1; j <= np.stage_count(); ++j) {
    const Eigen::MatrixXd& P = np.stage(j);
    widest = std::max(widest, static_cast<std::size_t>(P.rows()));
    std::vector<double> r(static_cast<std::size_t>(P.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(r.data(), P.rows(), P.cols()) = P;
    rows_.push_back(std::move(r));
  }
  cur_.resize(widest);
  next_.resize(widest);
  const double full = std::pow(static_cast<double>(np.ambient_dim()), static_cast<double>(np.stage_count()));
  if (np.stage_count() >= 2 && full * static_cast<double>(np.output_dim()) <= 4096) {
    Eigen::MatrixXd G = dense_matrix(np);
    dense_.resize(static_cast<std::size_t>(G.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(dense_.data(), G.rows(), G.cols()) = G;
    power_.resize(static_cast<std::size_t>(G.cols()));
  }
}

const double* PowerEvaluator::run(const double* __restrict u) {
  const Eigen::Index d = np_.ambient_dim();
  if (!dense_.empty()) {
    fill_power(u);
    std::fill(cur_.begin(), cur_.end(), 0.0);
    project_power(power_.data(), cur_.data());
    return cur_.data();
  }
  cur_[0] = 1.0;
  Eigen::Index c = 1;
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    const Eigen::Index rows = np_.stage(j + 1).rows();
    const double* __restrict P = rows_[j].data();
    const double* __restrict w = cur_.data();
    double* __restrict out = next_.data();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double* row = P + r * d * c;
      double total = 0.0;
      for (Eigen::Index a = 0; a < d; ++a) {
        double inner = 0.0;
        for (Eigen::Index i = 0; i < c; ++i) inner += row[a * c + i] * w[i];
        total += u[a] * inner;
      }
      out[r] = total;
    }
    std::swap(cur_, next_);
    c = rows;
  }
  return cur_.data();
}

void PowerEvaluator::fill_power(const double* __restrict u) {
  // flat(u^{⊗s}) built in place from the back.
  const Eigen::Index d = np_.ambient_dim();
  double* __restrict p = power_.data();
  Eigen::Index len = 1;
  p[0] = 1.0;
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    for (Eigen::Index a = d - 1; a >= 0; --a)
      for (Eigen::Index i = len - 1; i >= 0; --i) p[a * len + i] = u[a] * p[i];
    len *= d;
  }
}

void PowerEvaluator::add_power(const double* u, double weight, double* __restrict sum) {
  fill_power(u);
  const double* __restrict p = power_.data();
  for (std::size_t q = 0; q < power_.size(); ++q) sum[q] += weight * p[q];
}

void PowerEvaluator::project_power(const double* __restrict sum, double* __restrict out) const {
  const auto len = static_cast<Eigen::Index>(power_.size());
  const double* __restrict G = dense_.data();
  for (Eigen::Index r = 0; r < np_.output_dim(); ++r) {
    double total = 0.0;
    for (Eigen::Index q = 0; q < len; ++q) total += G[r * len + q] * sum[q];
    out[r] += total;
  }
}

void PowerEvaluator::accumulate(const double* u, double weight, double* out) {
  const double* w = run(u);
  const Eigen::Index c = np_.output_dim();
  for (Eigen::Index i = 0; i < c; ++i) out[i] += weight * w[i];
}

void PowerEvaluator::lifted(const double* u, double* out) {
  const double* w = run(u);
  const Eigen::Index c = np_.output_dim();
  for (Eigen::Index a = 0; a < np_.ambient_dim(); ++a)
    for (Eigen::Index i = 0; i < c; ++i) out[a * c + i] = u[a] * w[i];
}

Eigen::VectorXd apply_kron_block(const NestedProjection& np, const Eigen::VectorXd& left,
                                 std::span<const Eigen::VectorXd> tail) {
  if (left.size() != np.ambient_dim()) fail(ErrorKind::shape, "left factor dimension differs from the ambient dimension");
  return kron(left, apply_rank1(np, tail));
}

Eigen::MatrixXd dense_matrix(const NestedProjection& np) {
  const Eigen::Index d = np.ambient_dim();
  if (std::pow(static_cast<double>(d), static_cast<double>(np.stage_count())) > 1e4)
    fail(ErrorKind::size_limit, "dense materialization needs d^s <= 1e4");
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Ones(1, 1);
  for (std::size_t j = 1; j <= np.stage_count(); ++j) {
    // I_d ⊗ gamma
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(d * gamma.rows(), d * gamma.cols());
    for (Eigen::Index a = 0; a < d; ++a) block.block(a * gamma.rows(), a * gamma.cols(), gamma.rows(), gamma.cols()) = gamma;
    gamma = np.stage(j) * block;
  }
  return gamma;
}

double residual_norm(const NestedProjection& np, std::span<const Eigen::VectorXd> factors) {
  double full = 1.0;
  for (const auto& f : factors) full *= f.squaredNorm();
  double proj = apply_rank1(np, factors).squaredNorm();
  return std::sqrt(std::max(0.0, full - proj));
}

void to_json(nlohmann::json& j, const NestedProjection& np) {
  j = nlohmann::json{{"format", kFormat}, {"version", kVersion}, {"ambient_dim", np.ambient_dim()}};
  auto stages = nlohmann::json::array();
  for (const auto& s : np.stages()) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(s.size()));
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) data.push_back(s(r, c));
    stages.push_back({{"rows", s.rows()}, {"cols", s.cols()}, {"data", data}});
  }
  j["stages"] = stages;
}

void from_json(const nlohmann::json& j, NestedProjection& np) {
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion)
    fail(ErrorKind::config, "not a version-1 nested projection record");
  std::vector<Eigen::MatrixXd> stages;
  for (const auto& s : j.at("stages")) {
    auto rows = s.at("rows").get<Eigen::Index>(), cols = s.at("cols").get<Eigen::Index>();
    auto data = s.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) fail(ErrorKind::shape, "stage data length mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    stages.push_back(std::move(m));
  }
  np = NestedProjection(j.at("ambient_dim").get<Eigen::Index>(), std::move(stages));
}

}  // namespace pmix
