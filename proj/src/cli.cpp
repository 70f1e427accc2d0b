#include "pmix/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "pmix/error.hpp"
#include "pmix/eval.hpp"
#include "pmix/gaussian_cluster.hpp"
#include "pmix/mixture_gen.hpp"
#include "pmix/poincare_cluster.hpp"
#include "pmix/validate.hpp"

namespace pmix::cli {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

json default_config() {
  json validate = ValidateOptions{};
  validate.erase("seed");
  validate.erase("workers");
  validate["selectors"] = validation_selectors();
  return {
      {"seed", 0},
      {"workers", 1},
      {"out", ""},
      {"oracle", false},
      {"samples", 2000},
      {"mixture", nullptr},
      {"generator", nullptr},
      {"dataset", nullptr},
      {"cluster",
       {{"variant", "poincare"},
        {"base", nullptr},
        {"target_accuracy", 0.99},
        {"poincare",
         {{"k", 0},
          {"w_min", 0.0},
          {"sep", 0.0},
          {"alpha", 1.0},
          {"c", 0.5},
          {"delta", 0.05},
          {"test", "poincare"},
          {"t", 3},
          {"reps", 64},
          {"n_per_stage", 20000},
          {"probes", 0},
          {"batch", 0},
          {"weight_samples", 0},
          {"vote_radius", 0.2},
          {"support_fraction", 0.9},
          {"band", 0.0},
          {"mode", "subset_sum"}}},
        {"gaussian",
         {{"k", 0},
          {"w_min", 0.0},
          {"c", 0.5},
          {"sep", 0.0},
          {"alpha", 0.3},
          {"delta", 0.05},
          {"profile", "desk"},
          {"constants", nullptr}}}}},
      {"validate", validate},
      {"bench",
       {{"k", 2},
        {"d", 3},
        {"base", "gaussian"},
        {"separations", {3.0, 6.0, 12.0}},
        {"t", {3}},
        {"reps", {32}},
        {"seeds", 5},
        {"samples", 1000},
        {"n_per_stage", 5000},
        {"probes", 0},
        {"batch", 0},
        {"bootstrap", 1000}}},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    if (a.is_number_float()) return true;
    return b.is_number_integer() || b.is_number_unsigned();
  }
  return a.type() == b.type();
}

// Keys with a null default are free-form and checked by their own readers.
json merge_strict(const json& defaults, const json& raw, const std::string& where) {
  if (!raw.is_object()) fail(ErrorKind::config, (where.empty() ? "config" : where) + " must be an object");
  json out = defaults;
  for (const auto& [key, value] : raw.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) fail(ErrorKind::config, "unknown key '" + path + "'");
    const json& def = defaults.at(key);
    if (def.is_null()) {
      out[key] = value;
    } else if (def.is_object()) {
      out[key] = merge_strict(def, value, path);
    } else {
      if (!same_kind(def, value)) fail(ErrorKind::config, "wrong type for '" + path + "'");
      if (def.is_number_unsigned() || def.is_number_integer()) {
        if (value.is_number_integer() && value.get<std::int64_t>() < 0)
          fail(ErrorKind::config, "'" + path + "' must be non-negative");
      }
      out[key] = value;
    }
  }
  return out;
}

json load_document(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot read config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

// Resamples the rows of a dataset uniformly with replacement.
class EmpiricalSampler final : public Sampler {
 public:
  explicit EmpiricalSampler(const std::vector<LabeledSample>& rows) : rows_(rows) {
    if (rows_.empty()) fail(ErrorKind::empty_sample, "dataset has no rows");
  }
  Eigen::Index dim() const override { return rows_.front().x.size(); }
  void draw(Rng& rng, Eigen::VectorXd& out) const override { out = rows_[rng.below(rows_.size())].x; }
  using Sampler::draw;

 private:
  const std::vector<LabeledSample>& rows_;
};

struct Source {
  bool has_truth = false;
  MixtureSpec truth;
  std::vector<LabeledSample> rows;
  bool rows_labeled = false;
  bool from_dataset = false;
};

MixtureSpec spec_from_config(const json& cfg) {
  const bool has_mixture = !cfg["mixture"].is_null();
  const bool has_generator = !cfg["generator"].is_null();
  if (has_mixture && has_generator) fail(ErrorKind::config, "give either mixture or generator, not both");
  if (has_mixture) {
    auto spec = cfg["mixture"].get<MixtureSpec>();
    spec.validate();
    return spec;
  }
  if (!has_generator) fail(ErrorKind::config, "a mixture or generator section is required");
  json gen = cfg["generator"];
  if (gen.is_object() && !gen.contains("seed")) gen["seed"] = cfg["seed"];
  auto gc = gen.get<GenConfig>();
  gc.validate();
  return build_spec(gc);
}

std::vector<LabeledSample> draw_labeled(const MixtureSpec& spec, std::uint64_t seed, std::size_t n) {
  SampleStream stream(spec, seed);
  return stream.take(n);
}

json truth_metrics(const MixtureSpec& truth, const LearnedMixture& learned) {
  auto mm = match_means(truth.means, learned.means, truth.weights, learned.weights);
  json errors = json::array();
  json weight_errors = json::array();
  for (std::size_t i = 0; i < truth.k(); ++i) {
    auto l = mm.to_learned[i];
    if (l == kUnmatched) {
      errors.push_back(nullptr);
      weight_errors.push_back(nullptr);
      continue;
    }
    errors.push_back((truth.means[i] - learned.means[l]).norm());
    weight_errors.push_back(l < learned.weights.size() ? std::abs(truth.weights[i] - learned.weights[l]) : -1.0);
  }
  json match = json::array();
  for (auto l : mm.to_learned) match.push_back(l == kUnmatched ? json(nullptr) : json(l));
  return {{"max_mean_error", mm.max_distance},
          {"max_weight_error", mm.max_weight_error},
          {"mean_errors", errors},
          {"weight_errors", weight_errors},
          {"unmatched_truth", mm.unmatched_truth},
          {"extra_learned", mm.extra_learned},
          {"matching", match}};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) fail(ErrorKind::io, "cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

json base_report(const std::string& command, const json& cfg) {
  return {{"command", command},
          {"seed", cfg["seed"]},
          {"config", cfg},
          {"versions", {{"pmix", kVersion}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                         std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                         std::to_string(EIGEN_MINOR_VERSION)}}}};
}

struct Outcome {
  json report;
  int code = kExitOk;
};

Outcome cmd_generate(json cfg, const std::string& dir) {
  auto start = Clock::now();
  auto spec = spec_from_config(cfg);
  const auto n = cfg["samples"].get<std::size_t>();
  auto rows = draw_labeled(spec, cfg["seed"].get<std::uint64_t>(), n);
  ensure_dir(dir);
  write_samples_csv(join(dir, "samples.csv"), rows);
  write_text_file(join(dir, "spec.json"), json(spec).dump(2) + "\n");
  std::vector<std::size_t> counts(spec.k(), 0);
  for (const auto& r : rows) ++counts[r.label];
  Outcome o{base_report("generate", cfg), kExitOk};
  o.report["spec"] = spec;
  o.report["metrics"] = {{"rows", n}, {"label_counts", counts}, {"min_separation", spec.k() > 1 ? spec.min_separation() : 0.0}};
  o.report["files"] = {"samples.csv", "spec.json"};
  o.report["timing"] = {{"seconds", seconds_since(start)}};
  return o;
}

Source load_source(const json& cfg) {
  Source src;
  if (!cfg["dataset"].is_null()) {
    if (!cfg["dataset"].is_string()) fail(ErrorKind::config, "dataset must be a path");
    if (!cfg["generator"].is_null()) fail(ErrorKind::config, "give either dataset or generator, not both");
    src.from_dataset = true;
    try {
      src.rows = read_samples_csv(cfg["dataset"].get<std::string>(), &src.rows_labeled);
    } catch (const Error& e) {
      fail(ErrorKind::config, e.what());
    }
    if (src.rows.empty()) fail(ErrorKind::config, "dataset has no rows");
    if (!cfg["mixture"].is_null()) {
      src.truth = spec_from_config(cfg);
      src.has_truth = true;
      if (src.truth.dim() != src.rows.front().x.size())
        fail(ErrorKind::config, "mixture dimension differs from the dataset");
    }
    return src;
  }
  src.truth = spec_from_config(cfg);
  src.has_truth = true;
  src.rows = draw_labeled(src.truth, mix64(cfg["seed"].get<std::uint64_t>() ^ 0x41535347), cfg["samples"].get<std::size_t>());
  src.rows_labeled = true;
  return src;
}

ExpansionMode parse_mode(const std::string& s) {
  if (s == "subset_sum") return ExpansionMode::subset_sum;
  if (s == "labeled") return ExpansionMode::labeled;
  fail(ErrorKind::config, "unknown expansion mode '" + s + "'");
}

// A lower bound on the weights, kept below the smallest true weight so vote supports clear it.
constexpr double kWeightSlack = 0.8;

// Fills k, w_min and sep from ground truth when left at zero; the gaussian
// variant falls back to its own separation formula.
void fill_from_truth(json& sec, const Source& src, bool require_sep) {
  if (sec["k"].get<std::size_t>() == 0) {
    if (!src.has_truth) fail(ErrorKind::config, "k is required without a mixture");
    sec["k"] = src.truth.k();
  }
  if (sec["w_min"].get<double>() == 0.0) {
    if (!src.has_truth) fail(ErrorKind::config, "w_min is required without a mixture");
    sec["w_min"] = kWeightSlack * src.truth.min_weight();
  }
  if (sec["sep"].get<double>() == 0.0) {
    if (src.has_truth && src.truth.k() >= 2) sec["sep"] = src.truth.min_separation();
    else if (require_sep) fail(ErrorKind::config, "sep is required without a multi-component mixture");
  }
}

BaseDist resolve_base(json& cfg, const Source& src) {
  json& b = cfg["cluster"]["base"];
  if (b.is_null()) {
    if (!src.has_truth) fail(ErrorKind::config, "cluster.base is required for a dataset without a mixture");
    b = to_string(src.truth.base);
  }
  if (!b.is_string()) fail(ErrorKind::config, "cluster.base must be a string");
  try {
    return parse_base_dist(b.get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

PoincareOptions poincare_options(const json& sec, std::uint64_t seed, int workers) {
  PoincareOptions o;
  o.k = sec["k"].get<std::size_t>();
  o.w_min = sec["w_min"].get<double>();
  o.sep = sec["sep"].get<double>();
  o.alpha = sec["alpha"].get<double>();
  o.c = sec["c"].get<double>();
  o.delta = sec["delta"].get<double>();
  try {
    o.variant = parse_variant(sec["test"].get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  o.t = sec["t"].get<std::size_t>();
  o.reps = sec["reps"].get<std::size_t>();
  o.n_per_stage = sec["n_per_stage"].get<std::size_t>();
  o.probes = sec["probes"].get<std::size_t>();
  o.batch = sec["batch"].get<std::size_t>();
  o.weight_samples = sec["weight_samples"].get<std::size_t>();
  o.vote_radius = sec["vote_radius"].get<double>();
  o.support_fraction = sec["support_fraction"].get<double>();
  o.band = sec["band"].get<double>();
  o.mode = parse_mode(sec["mode"].get<std::string>());
  o.seed = seed;
  o.workers = workers;
  o.validate();
  return o;
}

Outcome cmd_cluster(json cfg, const std::string& dir) {
  auto start = Clock::now();
  Source src = load_source(cfg);
  const auto seed = cfg["seed"].get<std::uint64_t>();
  const int workers = cfg["workers"].get<int>();
  const bool oracle = cfg["oracle"].get<bool>();
  const std::string variant = cfg["cluster"]["variant"].get<std::string>();
  const BaseDist base_dist = resolve_base(cfg, src);
  const Eigen::Index d = src.rows.front().x.size();

  std::unique_ptr<Sampler> owned;
  if (src.from_dataset) owned = std::make_unique<EmpiricalSampler>(src.rows);
  else owned = std::make_unique<MixtureSampler>(src.truth);
  const Sampler& mix = *owned;
  if (oracle && !src.has_truth) fail(ErrorKind::config, "oracle mode needs a mixture");

  PoincareOptions popts;
  GaussianOptions gopts;
  if (variant == "poincare") {
    json& sec = cfg["cluster"]["poincare"];
    fill_from_truth(sec, src, true);
    popts = poincare_options(sec, seed, workers);
  } else if (variant == "gaussian") {
    if (base_dist != BaseDist::gaussian) fail(ErrorKind::config, "the gaussian variant needs a gaussian base");
    json& sec = cfg["cluster"]["gaussian"];
    fill_from_truth(sec, src, false);
    const auto profile = sec["profile"].get<std::string>();
    if (profile == "desk") gopts.constants = GaussianConstants::desk();
    else if (profile == "asymptotic") gopts.constants = GaussianConstants::asymptotic();
    else fail(ErrorKind::config, "unknown profile '" + profile + "'");
    if (!sec["constants"].is_null()) sec["constants"].get_to(gopts.constants);
    sec["constants"] = gopts.constants;
    gopts.k = sec["k"].get<std::size_t>();
    gopts.w_min = sec["w_min"].get<double>();
    gopts.c = sec["c"].get<double>();
    gopts.sep = sec["sep"].get<double>();
    gopts.alpha = sec["alpha"].get<double>();
    gopts.delta = sec["delta"].get<double>();
    gopts.seed = seed;
    gopts.workers = workers;
    if (oracle) gopts.oracle = &src.truth;
    gopts.validate();
  } else {
    fail(ErrorKind::config, "unknown variant '" + variant + "'");
  }

  Outcome o{base_report("cluster", cfg), kExitOk};
  LearnedMixture learned;
  try {
    if (variant == "poincare") {
      BaseSampler base(base_dist, d);
      PoincareRun run;
      if (oracle) {
        std::size_t t = popts.t;
        if (t == 0) t = choose_degree(popts.sep, popts.k, popts.w_min, popts.delta, popts.variant).t;
        auto chain = iterative_projection_exact(difference_spec(src.truth), t, difference_rank(popts.k));
        run = learn_poincare_with_chain(mix, base, std::move(chain), popts);
      } else {
        run = learn_poincare(mix, base, popts);
      }
      learned = run.learned;
      o.report["vote"] = run.ledger;
      o.report["chain"] = run.chain;
    } else {
      auto run = recursive_cluster(mix, gopts);
      learned = run.learned;
      o.report["diagnostics"] = run.diagnostics;
      o.report["regions"] = run.regions;
      o.report["partial"] = run.partial;
      ensure_dir(dir);
      write_text_file(join(dir, "diagnostics.jsonl"), diagnostics_jsonl(run.diagnostics));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    o.report["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    o.report["timing"] = {{"seconds", seconds_since(start)}};
    o.code = kExitFailure;
    return o;
  }
  if (learned.means.empty()) {
    o.report["error"] = {{"kind", to_string(ErrorKind::no_signal)}, {"message", "no component was learned"}};
    o.report["timing"] = {{"seconds", seconds_since(start)}};
    o.code = kExitFailure;
    return o;
  }
  o.report["learned"] = learned;
  o.report["warnings"] = learned.warnings;

  std::vector<Assignment> assigned;
  assigned.reserve(src.rows.size());
  for (const auto& r : src.rows) assigned.push_back(assign_sample(r.x, learned, learned.band));
  ensure_dir(dir);
  write_text_file(join(dir, "assignments.csv"), assignments_csv(assigned));

  json metrics = json::object();
  if (src.has_truth) metrics = truth_metrics(src.truth, learned);
  if (src.rows_labeled) {
    std::vector<std::size_t> truth_labels, got;
    for (std::size_t i = 0; i < src.rows.size(); ++i) {
      truth_labels.push_back(src.rows[i].label);
      got.push_back(assigned[i].index);
    }
    const double acc = clustering_accuracy(truth_labels, got);
    const double target = cfg["cluster"]["target_accuracy"].get<double>();
    metrics["accuracy"] = acc;
    metrics["target"] = {{"accuracy", target}, {"met", acc >= target}};
  }
  std::size_t ambiguous = 0;
  for (const auto& a : assigned) ambiguous += a.ambiguous;
  metrics["assigned"] = assigned.size();
  metrics["ambiguous"] = ambiguous;
  o.report["metrics"] = metrics;
  o.report["config"] = cfg;
  o.report["files"] = variant == "gaussian" ? json{"assignments.csv", "diagnostics.jsonl"} : json{"assignments.csv"};
  o.report["timing"] = {{"seconds", seconds_since(start)}};
  return o;
}

Outcome cmd_validate(json cfg, const std::vector<std::string>& positional) {
  auto start = Clock::now();
  json& sec = cfg["validate"];
  if (!positional.empty()) sec["selectors"] = positional;
  if (!sec["selectors"].is_array() || sec["selectors"].empty())
    fail(ErrorKind::config, "validate.selectors must be a non-empty list");
  const auto& known = validation_selectors();
  std::vector<std::string> selectors;
  for (const auto& s : sec["selectors"]) {
    if (!s.is_string()) fail(ErrorKind::config, "selectors must be strings");
    auto name = s.get<std::string>();
    if (name == "all") {
      selectors.insert(selectors.end(), known.begin(), known.end());
      continue;
    }
    if (std::find(known.begin(), known.end(), name) == known.end())
      fail(ErrorKind::config, "unknown selector '" + name + "'");
    selectors.push_back(name);
  }
  json opts_doc = sec;
  opts_doc.erase("selectors");
  opts_doc["seed"] = cfg["seed"];
  opts_doc["workers"] = cfg["workers"];
  auto opts = opts_doc.get<ValidateOptions>();

  Outcome o{base_report("validate", cfg), kExitOk};
  json suites = json::array();
  json timing = {{"suites", json::object()}};
  bool all = true;
  for (const auto& name : selectors) {
    json r;
    try {
      r = run_validation(name, opts);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::config) throw;
      r = {{"selector", name}, {"passed", false}, {"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
    }
    if (r.contains("seconds")) {
      timing["suites"][name] = r["seconds"];
      r.erase("seconds");
    }
    all = all && r["passed"].get<bool>();
    suites.push_back(r);
  }
  o.report["suites"] = suites;
  o.report["passed"] = all;
  timing["seconds"] = seconds_since(start);
  o.report["timing"] = timing;
  o.code = all ? kExitOk : kExitFailure;
  return o;
}

// Share of bootstrap resamples in which the mean of b falls below the mean of a.
double bootstrap_decrease(const std::vector<double>& a, const std::vector<double>& b, std::size_t rounds, Rng rng) {
  std::size_t below = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[rng.below(a.size())];
    for (std::size_t i = 0; i < b.size(); ++i) mb += b[rng.below(b.size())];
    below += mb / static_cast<double>(b.size()) < ma / static_cast<double>(a.size());
  }
  return static_cast<double>(below) / static_cast<double>(rounds);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Outcome cmd_bench(json cfg) {
  auto start = Clock::now();
  const json& b = cfg["bench"];
  const auto seed = cfg["seed"].get<std::uint64_t>();
  const int workers = cfg["workers"].get<int>();
  const auto k = b["k"].get<std::size_t>();
  const auto d = b["d"].get<Eigen::Index>();
  const auto seps = b["separations"].get<std::vector<double>>();
  const auto ts = b["t"].get<std::vector<std::size_t>>();
  const auto repss = b["reps"].get<std::vector<std::size_t>>();
  const auto seeds = b["seeds"].get<std::size_t>();
  const auto n = b["samples"].get<std::size_t>();
  const auto rounds = b["bootstrap"].get<std::size_t>();
  BaseDist base;
  try {
    base = parse_base_dist(b["base"].get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  if (k < 1 || d < 1 || seps.empty() || ts.empty() || repss.empty() || seeds < 1 || n < 1 || rounds < 1)
    fail(ErrorKind::config, "bench grid and sizes must be non-empty and positive");
  for (double s : seps)
    if (!(s > 0)) fail(ErrorKind::config, "separations must be positive");

  Outcome o{base_report("bench", cfg), kExitOk};
  json cells = json::array();
  // (t, reps) -> per-separation accuracies
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::vector<double>>> series;
  std::uint64_t cell_id = 0;
  for (double sep : seps)
    for (std::size_t t : ts)
      for (std::size_t reps : repss) {
        auto cell_start = Clock::now();
        std::vector<double> acc, base_acc;
        std::size_t failures = 0;
        std::vector<std::string> errors;
        for (std::size_t r = 0; r < seeds; ++r) {
          const std::uint64_t run_seed = mix64(seed ^ mix64(cell_id * 1000003 + r));
          GenConfig gc;
          gc.k = k;
          gc.d = d;
          gc.sep = sep;
          gc.base = base;
          gc.seed = run_seed;
          auto spec = build_spec(gc);
          auto rows = draw_labeled(spec, mix64(run_seed ^ 0x41535347), n);
          std::vector<Eigen::VectorXd> xs;
          std::vector<std::size_t> labels;
          for (const auto& row : rows) {
            xs.push_back(row.x);
            labels.push_back(row.label);
          }
          PoincareOptions po;
          po.k = k;
          po.w_min = spec.min_weight();
          po.sep = sep;
          po.t = t;
          po.reps = reps;
          po.n_per_stage = b["n_per_stage"].get<std::size_t>();
          po.probes = b["probes"].get<std::size_t>();
          po.batch = b["batch"].get<std::size_t>();
          po.seed = run_seed;
          po.workers = workers;
          MixtureSampler mix(spec);
          BaseSampler bs(base, d);
          double a = 0.0;
          try {
            auto learned = learn_poincare(mix, bs, po).learned;
            std::vector<std::size_t> got;
            for (const auto& x : xs) got.push_back(assign_sample(x, learned, learned.band).index);
            a = clustering_accuracy(labels, got);
          } catch (const Error& e) {
            if (e.kind() == ErrorKind::config) throw;
            ++failures;
            errors.push_back(to_string(e.kind()));
          }
          acc.push_back(a);
          auto km = pca_kmeans(xs, k, run_seed);
          base_acc.push_back(clustering_accuracy(labels, km.labels));
        }
        series[{t, reps}].push_back(acc);
        cells.push_back({{"separation", sep},
                         {"t", t},
                         {"reps", reps},
                         {"accuracy_mean", mean_of(acc)},
                         {"accuracies", acc},
                         {"baseline_accuracy_mean", mean_of(base_acc)},
                         {"baseline_accuracies", base_acc},
                         {"failures", failures},
                         {"errors", errors},
                         {"timing", {{"seconds", seconds_since(cell_start)}}}});
        ++cell_id;
      }
  json trends = json::array();
  bool monotone = true;
  std::uint64_t trend_id = 0;
  for (const auto& [key, per_sep] : series) {
    json steps = json::array();
    for (std::size_t i = 0; i + 1 < per_sep.size(); ++i) {
      double p = bootstrap_decrease(per_sep[i], per_sep[i + 1], rounds, Rng(seed, 0x42000 + trend_id++));
      bool ok = p < 0.95;
      monotone = monotone && ok;
      steps.push_back({{"from", seps[i]}, {"to", seps[i + 1]}, {"decrease_probability", p}, {"ok", ok}});
    }
    trends.push_back({{"t", key.first}, {"reps", key.second}, {"steps", steps}});
  }
  o.report["cells"] = cells;
  o.report["metrics"] = {{"grid_size", cells.size()}, {"monotone_in_separation", monotone}, {"trends", trends}};
  o.report["timing"] = {{"seconds", seconds_since(start)}};
  return o;
}

std::string resolve_out_dir(const json& cfg) {
  auto out = cfg["out"].get<std::string>();
  if (!out.empty()) return out;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "pmix_out";
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::config, "override '" + assignment + "' must be key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) fail(ErrorKind::config, "override path '" + path + "' has an empty segment");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(parts[i]);
      } catch (const std::exception&) {
        fail(ErrorKind::config, "override path '" + path + "' indexes a list with '" + parts[i] + "'");
      }
      if (idx >= node->size()) fail(ErrorKind::config, "override index out of range in '" + path + "'");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) fail(ErrorKind::config, "override path '" + path + "' crosses a leaf");
      node = &(*node)[parts[i]];
    }
    if (last) *node = value;
  }
}

json resolve_config(const json& raw, const std::string& command) {
  static const std::set<std::string> commands{"generate", "cluster", "validate", "bench"};
  if (!commands.count(command)) fail(ErrorKind::config, "unknown command '" + command + "'");
  json cfg = merge_strict(default_config(), raw, "");
  if (cfg["workers"].get<int>() < 1) fail(ErrorKind::config, "workers must be at least 1");
  static const std::map<std::string, std::vector<std::string>> sections{
      {"generate", {"samples", "mixture", "generator"}},
      {"cluster", {"samples", "mixture", "generator", "dataset", "oracle", "cluster"}},
      {"validate", {"validate"}},
      {"bench", {"bench"}}};
  json echo = {{"seed", cfg["seed"]}, {"workers", cfg["workers"]}, {"out", cfg["out"]}};
  for (const auto& key : sections.at(command)) echo[key] = cfg[key];
  return echo;
}

json strip_timing(const json& report) {
  if (report.is_object()) {
    json out = json::object();
    for (const auto& [key, value] : report.items())
      if (key != "timing") out[key] = strip_timing(value);
    return out;
  }
  if (report.is_array()) {
    json out = json::array();
    for (const auto& v : report) out.push_back(strip_timing(v));
    return out;
  }
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture learning harness", "pmix"};
  app.set_version_flag("--version", kVersion);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config document");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out_dir, std::string("Output directory (default $") + kOutDirEnv + ")");
  app.add_option("--set", overrides, "Override a config leaf: dotted.path=value");
  app.require_subcommand(1);
  auto* gen = app.add_subcommand("generate", "Write a labeled dataset and its spec");
  auto* clu = app.add_subcommand("cluster", "Learn the means of a mixture");
  auto* val = app.add_subcommand("validate", "Run oracle and property suites");
  auto* ben = app.add_subcommand("bench", "Sweep separation, degree and repetitions");
  std::vector<std::string> selectors;
  val->add_option("selectors", selectors, "Suites to run, or 'all'");
  for (auto* sub : {gen, clu, val, ben}) sub->fallthrough();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  std::string command = app.get_subcommands().front()->get_name();

  json cfg;
  try {
    json raw = load_document(config_path);
    for (const auto& o : overrides) apply_override(raw, o);
    if (seed_opt->count()) raw["seed"] = seed;
    if (workers_opt->count()) raw["workers"] = workers;
    if (out_opt->count()) raw["out"] = out_dir;
    cfg = resolve_config(raw, command);
    cfg["out"] = resolve_out_dir(cfg);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }

  const std::string dir = cfg["out"].get<std::string>();
  Outcome o;
  try {
    if (command == "generate") o = cmd_generate(cfg, dir);
    else if (command == "cluster") o = cmd_cluster(cfg, dir);
    else if (command == "validate") o = cmd_validate(cfg, selectors);
    else o = cmd_bench(cfg);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) {
      err << e.what() << "\n";
      return kExitConfig;
    }
    err << e.what() << "\n";
    o.report = base_report(command, cfg);
    o.report["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    o.code = kExitFailure;
  }
  try {
    ensure_dir(dir);
    write_text_file(join(dir, "report.json"), o.report.dump(2) + "\n");
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitFailure;
  }
  out << command << ": " << (o.code == kExitOk ? "ok" : "failed") << " -> " << join(dir, "report.json") << "\n";
  return o.code;
}

}  // namespace pmix::cli
