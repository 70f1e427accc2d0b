#include "pmix/mixture_gen.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "pmix/error.hpp"

namespace pmix {

namespace {

constexpr std::uint64_t kPlacementStream = 0x504c414345;
constexpr std::uint64_t kWeightStream = 0x5745494748;
constexpr std::uint64_t kSampleStream = 0x53414d504c;
constexpr std::uint64_t kBaseStream = 0x42415345;
constexpr int kCandidates = 2000;
constexpr int kRestarts = 20;

Eigen::VectorXd random_unit(Eigen::Index d, Rng& rng) {
  Eigen::VectorXd u(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
  } while (u.norm() < 1e-12);
  return u / u.norm();
}

std::vector<Eigen::VectorXd> place_nested(std::size_t count, Eigen::Index d, const std::vector<double>& seps,
                                          std::size_t level, Rng& rng) {
  if (level == 0) return place_points(count, d, seps[0], rng);
  auto groups = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(count), 1.0 / static_cast<double>(level + 1)) - 1e-9));
  groups = std::clamp<std::size_t>(groups, 1, count);
  auto centers = place_points(groups, d, seps[level], rng);
  std::vector<Eigen::VectorXd> out;
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t size = count / groups + (g < count % groups ? 1 : 0);
    for (auto& p : place_nested(size, d, seps, level - 1, rng)) out.push_back(p + centers[g]);
  }
  return out;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorKind::config, std::string("missing key '") + key + "'");
  return j.at(key);
}

}  // namespace

void GenConfig::validate() const {
  if (k < 1) fail(ErrorKind::config, "k must be at least 1");
  if (d < 1) fail(ErrorKind::config, "d must be at least 1");
  if (separation == SeparationProfile::uniform && !(sep > 0)) fail(ErrorKind::config, "sep must be positive");
  if (separation == SeparationProfile::hierarchical) {
    if (level_separations.empty()) fail(ErrorKind::config, "hierarchical profile needs level separations");
    for (double s : level_separations)
      if (!(s > 0)) fail(ErrorKind::config, "level separations must be positive");
  }
  if (weighting == WeightProfile::fixed) {
    if (weights.size() != k) fail(ErrorKind::config, "explicit weights must have k entries");
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0)) fail(ErrorKind::config, "explicit weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::config, "explicit weights must sum to 1");
  }
  if (weighting == WeightProfile::dirichlet && !(spread >= 0)) fail(ErrorKind::config, "spread must be non-negative");
}

std::vector<Eigen::VectorXd> place_points(std::size_t k, Eigen::Index d, double sep, Rng& rng) {
  if (k == 1) return {Eigen::VectorXd::Zero(d)};
  for (int restart = 0; restart < kRestarts; ++restart) {
    std::vector<Eigen::VectorXd> pts{Eigen::VectorXd::Zero(d)};
    while (pts.size() < k) {
      bool placed = false;
      for (int c = 0; c < kCandidates && !placed; ++c) {
        const auto& anchor = pts[rng.below(pts.size())];
        Eigen::VectorXd cand = anchor + sep * (1.0 + 0.2 * rng.uniform()) * random_unit(d, rng);
        bool ok = true;
        for (const auto& p : pts) {
          double dist = (cand - p).norm();
          if (dist < sep || dist > 1.2 * sep) {
            ok = false;
            break;
          }
        }
        if (ok) {
          pts.push_back(cand);
          placed = true;
        }
      }
      if (!placed) break;
    }
    if (pts.size() == k) {
      Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
      for (const auto& p : pts) center += p;
      center /= static_cast<double>(k);
      for (auto& p : pts) p -= center;
      return pts;
    }
  }
  fail(ErrorKind::placement, "could not place " + std::to_string(k) + " points in dimension " + std::to_string(d) +
                                 " with pairwise distances in [sep, 1.2 sep]");
}

MixtureSpec build_spec(const GenConfig& cfg) {
  cfg.validate();
  MixtureSpec spec;
  spec.base = cfg.base;
  Rng placement(cfg.seed, kPlacementStream);
  if (cfg.separation == SeparationProfile::uniform) {
    spec.means = place_points(cfg.k, cfg.d, cfg.sep, placement);
  } else {
    spec.means = place_nested(cfg.k, cfg.d, cfg.level_separations, cfg.level_separations.size() - 1, placement);
    Eigen::VectorXd center = Eigen::VectorXd::Zero(cfg.d);
    for (const auto& m : spec.means) center += m;
    center /= static_cast<double>(cfg.k);
    for (auto& m : spec.means) m -= center;
  }
  Rng wr(cfg.seed, kWeightStream);
  switch (cfg.weighting) {
    case WeightProfile::uniform: spec.weights.assign(cfg.k, 1.0 / static_cast<double>(cfg.k)); break;
    case WeightProfile::dirichlet:
      for (std::size_t i = 0; i < cfg.k; ++i) spec.weights.push_back(1.0 + cfg.spread * wr.exponential());
      break;
    case WeightProfile::fixed: spec.weights = cfg.weights; break;
  }
  double total = 0.0;
  for (double w : spec.weights) total += w;
  for (double& w : spec.weights) w /= total;
  spec.validate();
  return spec;
}

SampleStream::SampleStream(MixtureSpec spec, std::uint64_t seed)
    : sampler_(std::move(spec)), root_(seed, kSampleStream) {}

LabeledSample SampleStream::at(std::uint64_t index) const {
  Rng rng = root_.child(index);
  LabeledSample s;
  s.label = sampler_.draw_labeled(rng, s.x);
  return s;
}

LabeledSample SampleStream::next() { return at(index_++); }

std::vector<LabeledSample> SampleStream::take(std::size_t n) {
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

SampleStream sample_stream(const MixtureSpec& spec, std::uint64_t seed) { return SampleStream(spec, seed); }

BaseStream::BaseStream(BaseDist dist, Eigen::Index d, std::uint64_t seed)
    : sampler_(dist, d), root_(seed, kBaseStream) {}

Eigen::VectorXd BaseStream::next() {
  Rng rng = root_.child(index_++);
  return sampler_.draw(rng);
}

BaseStream base_sampler(const std::string& tag, Eigen::Index d, std::uint64_t seed) {
  if (d < 1) fail(ErrorKind::config, "dimension must be at least 1");
  return BaseStream(parse_base_dist(tag), d, seed);
}

void write_samples_csv(std::ostream& out, const std::vector<LabeledSample>& samples) {
  const Eigen::Index d = samples.empty() ? 0 : samples.front().x.size();
  out << "id";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x_" << i;
  out << ",label\n";
  out << std::setprecision(17);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    out << n;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << samples[n].x[i];
    out << ',' << samples[n].label << '\n';
  }
}

void write_samples_csv(const std::string& path, const std::vector<LabeledSample>& samples) {
  std::ostringstream s;
  write_samples_csv(s, samples);
  write_text_file(path, s.str());
}

std::vector<LabeledSample> read_samples_csv(const std::string& path, bool* has_labels) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, "empty sample file '" + path + "'");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.front() != "id") fail(ErrorKind::io, "sample file must start with an id column");
  bool labeled = header.back() == "label";
  const std::size_t d = header.size() - 1 - (labeled ? 1 : 0);
  if (d == 0) fail(ErrorKind::io, "sample file has no coordinate columns");
  for (std::size_t i = 0; i < d; ++i)
    if (header[i + 1] != "x_" + std::to_string(i)) fail(ErrorKind::io, "unexpected column '" + header[i + 1] + "'");
  std::vector<LabeledSample> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) fail(ErrorKind::io, "row " + std::to_string(row) + " has the wrong column count");
    LabeledSample s;
    s.x.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      char* end = nullptr;
      s.x[static_cast<Eigen::Index>(i)] = std::strtod(cells[i + 1].c_str(), &end);
      if (end == cells[i + 1].c_str() || *end != '\0') fail(ErrorKind::io, "bad number at row " + std::to_string(row));
    }
    if (labeled) s.label = static_cast<std::size_t>(std::stoull(cells.back()));
    out.push_back(std::move(s));
  }
  if (has_labels) *has_labels = labeled;
  return out;
}

void to_json(nlohmann::json& j, const MixtureSpec& spec) {
  nlohmann::json means = nlohmann::json::array();
  for (const auto& m : spec.means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  j = nlohmann::json{{"base", to_string(spec.base)}, {"weights", spec.weights}, {"means", means}};
}

void from_json(const nlohmann::json& j, MixtureSpec& spec) {
  if (!j.is_object()) fail(ErrorKind::config, "mixture spec must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "base" && key != "weights" && key != "means") fail(ErrorKind::config, "unknown mixture key '" + key + "'");
  try {
    spec.base = parse_base_dist(require(j, "base").get<std::string>());
    spec.weights = require(j, "weights").get<std::vector<double>>();
    spec.means.clear();
    for (const auto& m : require(j, "means")) {
      auto v = m.get<std::vector<double>>();
      spec.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("mixture spec: ") + e.what());
  }
  double total = 0.0;
  for (double w : spec.weights) total += w;
  if (std::abs(total - 1.0) <= 1e-9)
    for (double& w : spec.weights) w /= total;
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("mixture spec: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const GenConfig& cfg) {
  j = nlohmann::json{{"k", cfg.k}, {"d", cfg.d}, {"base", to_string(cfg.base)}, {"seed", cfg.seed}};
  if (cfg.separation == SeparationProfile::uniform) {
    j["separation"] = {{"profile", "uniform"}, {"sep", cfg.sep}};
  } else {
    j["separation"] = {{"profile", "hierarchical"}, {"levels", cfg.level_separations}};
  }
  switch (cfg.weighting) {
    case WeightProfile::uniform: j["weights"] = {{"profile", "uniform"}}; break;
    case WeightProfile::dirichlet: j["weights"] = {{"profile", "dirichlet"}, {"spread", cfg.spread}}; break;
    case WeightProfile::fixed: j["weights"] = {{"profile", "explicit"}, {"values", cfg.weights}}; break;
  }
}

void from_json(const nlohmann::json& j, GenConfig& cfg) {
  auto only = [](const nlohmann::json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) fail(ErrorKind::config, where + " must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, _] : obj.items())
      if (!allowed.count(key)) fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
  };
  only(j, {"k", "d", "base", "seed", "separation", "weights"}, "generator");
  try {
    cfg = GenConfig{};
    cfg.k = require(j, "k").get<std::size_t>();
    cfg.d = require(j, "d").get<Eigen::Index>();
    if (j.contains("base")) cfg.base = parse_base_dist(j["base"].get<std::string>());
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("separation")) {
      const auto& s = j["separation"];
      only(s, {"profile", "sep", "levels"}, "separation");
      auto profile = s.value("profile", std::string("uniform"));
      if (profile == "uniform") {
        cfg.separation = SeparationProfile::uniform;
        if (s.contains("levels")) fail(ErrorKind::config, "uniform separation takes no levels");
        cfg.sep = s.value("sep", cfg.sep);
      } else if (profile == "hierarchical") {
        cfg.separation = SeparationProfile::hierarchical;
        if (s.contains("sep")) fail(ErrorKind::config, "hierarchical separation takes levels, not sep");
        cfg.level_separations = require(s, "levels").get<std::vector<double>>();
      } else {
        fail(ErrorKind::config, "unknown separation profile '" + profile + "'");
      }
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      only(w, {"profile", "spread", "values"}, "weights");
      auto profile = w.value("profile", std::string("uniform"));
      if (profile == "uniform") {
        cfg.weighting = WeightProfile::uniform;
      } else if (profile == "dirichlet") {
        cfg.weighting = WeightProfile::dirichlet;
        cfg.spread = w.value("spread", cfg.spread);
      } else if (profile == "explicit") {
        cfg.weighting = WeightProfile::fixed;
        cfg.weights = require(w, "values").get<std::vector<double>>();
      } else {
        fail(ErrorKind::config, "unknown weight profile '" + profile + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("generator: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, e.what());
  }
  cfg.validate();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << text;
  out.close();
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

}  // namespace pmix
