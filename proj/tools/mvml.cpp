/// @file  mvml.cpp
/// @brief Pipeline driver: generate -> sample -> split -> train -> evaluate,
///        plus cross-validation, consistency, learning curves, PCA,
///        landmark oracles, and partition broadcast. Every run writes a
///        manifest that `replay` can re-execute byte-identically.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mvml/eval.hpp"
#include "mvml/io.hpp"
#include "mvml/parallel.hpp"
#include "mvml/procrustes.hpp"
#include "mvml/serialize.hpp"
#include "mvml/solver.hpp"
#include "mvml/supervised.hpp"
#include "mvml/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvml;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

// ---------------------------------------------------------------------------
// Option bookkeeping: every flag registers a json key so that (a) a config
// file can fill options the command line left unset, (b) the resolved values
// land in the manifest, and (c) `replay` can re-run from a manifest alone.
// Precedence: command-line flag > config file > built-in default.

class OptionSet {
public:
  explicit OptionSet(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_, "JSON config file (flags take precedence)");
  }

  template <typename T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    auto* opt = cmd_->add_option(flag, var, desc);
    entries_.push_back({key_of(flag), opt, [&var](const json& v) { var = v.get<T>(); },
                        [&var]() { return json(var); }});
    return opt;
  }

  CLI::Option* add_flag(const std::string& flag, bool& var, const std::string& desc) {
    auto* opt = cmd_->add_flag(flag, var, desc);
    entries_.push_back({key_of(flag), opt, [&var](const json& v) { var = v.get<bool>(); },
                        [&var]() { return json(var); }});
    return opt;
  }

  /// Applies the config file (if any) to unset options and returns the
  /// fully resolved configuration.
  json resolve() const {
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw DataError("cannot open config file: " + config_path_);
      json cfg;
      try {
        in >> cfg;
      } catch (const json::exception& e) {
        throw DataError(config_path_ + ": " + e.what());
      }
      for (const auto& entry : entries_) {
        if (entry.option->count() == 0 && cfg.contains(entry.key)) {
          entry.from_json(cfg[entry.key]);
        }
      }
    }
    json resolved;
    for (const auto& entry : entries_) resolved[entry.key] = entry.to_json();
    return resolved;
  }

  /// Overwrites every registered option from a manifest config (replay).
  void load(const json& cfg) const {
    for (const auto& entry : entries_) {
      if (cfg.contains(entry.key)) entry.from_json(cfg[entry.key]);
    }
  }

private:
  static std::string key_of(const std::string& flag) {
    auto pos = flag.find_first_not_of('-');
    std::string key = flag.substr(pos);
    for (auto& c : key) {
      if (c == '-') c = '_';
    }
    return key;
  }

  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> from_json;
    std::function<json()> to_json;
  };
  CLI::App* cmd_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const json& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::uint64_t seed,
                    bool deterministic, double wall_ms) {
  json m;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["seed"] = seed;
  m["deterministic"] = deterministic;
  m["version"] = kVersion;
  m["wall_clock_ms"] = wall_ms;
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << m.dump(2) << '\n';
}

/// Runs fn, then writes the manifest with the files fn reported.
struct RunRecorder {
  fs::path out_dir;
  std::string subcommand;
  json config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  bool deterministic = false;

  void record(const std::function<void()>& fn) {
    fs::create_directories(out_dir);
    const auto start = std::chrono::steady_clock::now();
    fn();
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    write_manifest(out_dir, subcommand, config, inputs, outputs, seed, deterministic, ms);
  }
};

std::vector<Index> parse_index_list(const std::string& csv, const char* what) {
  std::vector<Index> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " entry: " + item);
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " entry: " + item);
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Eigen::MatrixXd> load_view_matrices(const fs::path& dir) {
  std::vector<Eigen::MatrixXd> dists;
  for (int v = 0;; ++v) {
    const fs::path p = dir / ("dist_view" + std::to_string(v) + ".txt");
    if (!fs::exists(p)) break;
    dists.push_back(load_matrix(p));
  }
  if (dists.empty()) throw DataError("no dist_view<t>.txt files under " + dir.string());
  return dists;
}

Index infer_num_objects(const std::vector<std::vector<TripletTerm>>& views) {
  Index n = 0;
  for (const auto& v : views) {
    for (const auto& t : v) n = std::max({n, t.i + 1, t.j + 1, t.k + 1});
  }
  return n;
}

// ---------------------------------------------------------------------------
// Shared solver option block (train / cv / curve).

struct SolverFlags {
  long long dim = 10;
  double beta = 1.0;
  double gamma = 1.0;
  double eta0 = 1e-2;
  int m_max = 20;
  int outer_max = 500;
  double rel_tol = 1e-5;
  std::string mode = "joint";
  std::string param = "factored";
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 1;
  bool freeze_transform = false;
  bool step_reset_per_phase = false;

  void register_options(OptionSet& opts) {
    opts.add("--dim", dim, "embedding dimension D");
    opts.add("--beta", beta, "penalty on ||L||_F^2");
    opts.add("--gamma", gamma, "penalty on sum tr(M_t)");
    opts.add("--eta0", eta0, "initial subgradient step size");
    opts.add("--m-max", m_max, "inner updates per phase");
    opts.add("--outer-max", outer_max, "outer iteration budget");
    opts.add("--rel-tol", rel_tol, "relative-decrease stopping tolerance");
    opts.add("--mode", mode, "joint | independent | pooled");
    opts.add("--param", param, "baseline parametrization: factored | full_psd");
    opts.add("--seed", seed, "RNG seed");
    opts.add_flag("--deterministic", deterministic, "sequential reductions, bit-stable output");
    opts.add("--threads", threads, "worker cap");
    opts.add_flag("--step-reset-per-phase", step_reset_per_phase,
                  "restart the step counter every phase");
    opts.add_flag("--freeze-transform", freeze_transform, "diagnostic: keep L at its init");
  }

  SolverConfig to_config() const {
    SolverConfig cfg;
    cfg.embed_dim = dim;
    cfg.beta = beta;
    cfg.gamma = gamma;
    cfg.eta0 = eta0;
    cfg.m_max = m_max;
    cfg.outer_max = outer_max;
    cfg.rel_tol = rel_tol;
    cfg.mode = train_mode_from_string(mode);
    cfg.baseline_param = baseline_param_from_string(param);
    cfg.seed = seed;
    cfg.deterministic = deterministic;
    cfg.threads = threads;
    cfg.freeze_transform = freeze_transform;
    cfg.step_reset_per_phase = step_reset_per_phase;
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Subcommand state + handlers. Each handler runs after CLI parsing (or from
// a replayed manifest) with all options resolved.

struct App {
  CLI::App cli{"multi-view metric learning from triplet comparisons"};

  // generate
  struct {
    std::string kind = "uniform";
    long long n = 200;
    long long dim = 10;
    std::string subspace_dims = "2,3,4,5,6,7";
    int clusters = 4;
    double variance = 1.0;
    double box_side = 10.0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;
    std::string out;
  } gen;

  // sample
  struct {
    std::string data;
    long long count = 1000;
    std::string counts;  // per-view override
    std::uint64_t seed = 0;
    std::string out;
  } smp;

  // split
  struct {
    std::string triplets;
    double test_fraction = 0.2;
    bool equalize = false;
    std::uint64_t seed = 0;
    std::string out;
  } spl;

  // train
  struct {
    std::string triplets;
    std::string features;
    long long num_objects = 0;
    bool progress = false;
    SolverFlags solver;
    std::string out;
  } trn;

  // cv
  struct {
    std::string triplets;
    std::string features;
    long long num_objects = 0;
    std::string grid;  // empty -> default 1e-5..1e5
    int folds = 5;
    SolverFlags solver;
    std::string out;
  } cvc;

  // eval
  struct {
    std::string model;
    std::string test;
    std::string features;
    std::string labels;
    int knn_k = 3;
    int threads = 1;
    std::string out;
  } evl;

  // consistency
  struct {
    std::string data;
    std::string model;
    std::string features;
    long long probes = 100000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
  } con;

  // curve
  struct {
    std::string data;
    std::string budgets = "600,1800,6000";
    long long sweep_view = -1;
    long long others = 3000;
    long long test_per_view = 500;
    std::string modes = "joint,independent,pooled";
    std::string seeds = "1,2,3,4,5";
    SolverFlags solver;  // its --threads parallelizes runs here
    std::string out;
  } crv;

  // pca
  struct {
    std::string features;
    long long out_dim = 2;
    std::string out;
  } pca;

  // procrustes
  struct {
    std::string landmarks;
    std::string views;  // JSON config; empty -> default subsets
    int threads = 1;
    std::string out;
  } pro;

  // broadcast
  struct {
    long long target = -1;
    std::string similar;
    std::string dissimilar;
    long long view = 0;
    std::string partitions;  // file mode
    std::string out;
  } brd;

  // replay
  struct {
    std::string manifest;
    std::string out;  // optional override
  } rep;

  std::map<std::string, std::pair<CLI::App*, OptionSet*>> commands;
  std::vector<std::unique_ptr<OptionSet>> option_sets;
  json resolved_config;

  OptionSet& add_command(const std::string& name, const std::string& desc, CLI::App*& sub) {
    sub = cli.add_subcommand(name, desc);
    option_sets.push_back(std::make_unique<OptionSet>(sub));
    commands[name] = {sub, option_sets.back().get()};
    return *option_sets.back();
  }
};

// --- generate ---------------------------------------------------------------

void run_generate(App& a) {
  const auto& g = a.gen;
  if (g.out.empty()) throw ConfigError("generate: --out is required");
  const auto dims = parse_index_list(g.subspace_dims, "subspace-dims");
  SyntheticData data;
  if (g.kind == "uniform") {
    data = gen_uniform(g.n, g.dim, dims, g.seed, g.threads);
  } else if (g.kind == "clustered") {
    data = gen_clustered(g.n, g.clusters, g.variance, g.box_side, g.dim, dims, g.seed,
                         g.threads);
  } else {
    throw ConfigError("generate: unknown kind `" + g.kind + "` (uniform | clustered)");
  }
  RunRecorder rec{fs::path(g.out), "generate", a.resolved_config,
                  {}, {}, g.seed, g.deterministic};
  rec.record([&] {
    save_features(rec.out_dir / "points.tsv", data.points);
    rec.outputs.push_back("points.tsv");
    if (!data.labels.empty()) {
      save_labels(rec.out_dir / "labels.tsv", data.labels);
      rec.outputs.push_back("labels.tsv");
    }
    for (std::size_t v = 0; v < data.views.dist.size(); ++v) {
      const std::string name = "dist_view" + std::to_string(v) + ".txt";
      save_matrix(rec.out_dir / name, data.views.dist[v]);
      rec.outputs.push_back(name);
    }
  });
}

// --- sample ------------------------------------------------------------------

void run_sample(App& a) {
  const auto& s = a.smp;
  if (s.data.empty() || s.out.empty()) throw ConfigError("sample: --data and --out are required");
  const auto dists = load_view_matrices(s.data);
  std::vector<Index> counts(dists.size(), s.count);
  if (!s.counts.empty()) {
    counts = parse_index_list(s.counts, "counts");
    if (counts.size() != dists.size()) {
      throw ConfigError("sample: --counts must list one entry per view");
    }
  }
  RunRecorder rec{fs::path(s.out), "sample", a.resolved_config,
                  {s.data}, {"triplets.tsv"}, s.seed, false};
  rec.record([&] {
    std::vector<std::vector<TripletTerm>> views(dists.size());
    for (std::size_t v = 0; v < dists.size(); ++v) {
      if (counts[v] <= 0) continue;
      views[v] = sample_triplets(dists[v], static_cast<int>(v), counts[v],
                                 mix_seed(s.seed, v));
    }
    save_triplets(rec.out_dir / "triplets.tsv", views);
  });
}

// --- split -------------------------------------------------------------------

void run_split(App& a) {
  const auto& s = a.spl;
  if (s.triplets.empty() || s.out.empty()) {
    throw ConfigError("split: --triplets and --out are required");
  }
  const auto views = load_triplets(s.triplets);
  RunRecorder rec{fs::path(s.out), "split", a.resolved_config,
                  {s.triplets}, {"train.tsv", "test.tsv"}, s.seed, false};
  rec.record([&] {
    const auto split = split_train_test(views, s.test_fraction, s.seed, s.equalize);
    save_triplets(rec.out_dir / "train.tsv", split.train);
    save_triplets(rec.out_dir / "test.tsv", split.test);
  });
}

// --- train -------------------------------------------------------------------

TripletDataset load_dataset(const std::string& triplet_path, const std::string& feature_path,
                            long long num_objects) {
  TripletDataset data;
  if (!feature_path.empty()) data.features = load_features(feature_path);
  data.views = load_triplets(triplet_path, data.features ? data.features->rows() : 0);
  data.num_objects = data.features          ? data.features->rows()
                     : num_objects > 0      ? static_cast<Index>(num_objects)
                                            : infer_num_objects(data.views);
  data.validate();
  return data;
}

void run_train(App& a) {
  const auto& t = a.trn;
  if (t.triplets.empty() || t.out.empty()) {
    throw ConfigError("train: --triplets and --out are required");
  }
  TripletDataset data = load_dataset(t.triplets, t.features, t.num_objects);
  const SolverConfig cfg = t.solver.to_config();
  RunRecorder rec{fs::path(t.out), "train", a.resolved_config,
                  {t.triplets}, {}, cfg.seed, cfg.deterministic};
  if (!t.features.empty()) rec.inputs.push_back(t.features);
  rec.record([&] {
    TrainedModel model = train(data, cfg, t.progress ? &std::cerr : nullptr);
    save_model(rec.out_dir, model);
    rec.outputs.push_back("model.json");
    rec.outputs.push_back("transform.txt");
    for (Index v = 0; v < model.num_views(); ++v) {
      rec.outputs.push_back("metric_" + std::to_string(v) + ".txt");
    }
  });
}

// --- cv ----------------------------------------------------------------------

void run_cv(App& a) {
  const auto& c = a.cvc;
  if (c.triplets.empty() || c.out.empty()) {
    throw ConfigError("cv: --triplets and --out are required");
  }
  TripletDataset data = load_dataset(c.triplets, c.features, c.num_objects);
  const SolverConfig cfg = c.solver.to_config();
  const std::vector<double> grid =
      c.grid.empty() ? default_cv_grid() : parse_double_list(c.grid, "grid");
  RunRecorder rec{fs::path(c.out), "cv", a.resolved_config,
                  {c.triplets}, {"cv.json"}, cfg.seed, cfg.deterministic};
  if (!c.features.empty()) rec.inputs.push_back(c.features);
  rec.record([&] {
    const CrossValidationResult result = cross_validate(data, cfg, grid, c.folds);
    json j;
    j["grid"] = result.grid;
    j["mean_validation_error"] = result.mean_validation_error;
    j["best_product"] = result.best_product;
    std::ofstream out(rec.out_dir / "cv.json");
    out << j.dump(2) << '\n';
  });
}

// --- eval ---------------------------------------------------------------------

void run_eval(App& a) {
  const auto& e = a.evl;
  if (e.model.empty() || e.test.empty() || e.out.empty()) {
    throw ConfigError("eval: --model, --test and --out are required");
  }
  TrainedModel model = load_model(e.model);
  std::optional<Eigen::MatrixXd> features;
  if (!e.features.empty()) features = load_features(e.features);
  const Eigen::MatrixXd* X = features ? &*features : nullptr;
  auto test = load_triplets(e.test, X ? X->rows() : model.transform.input_dim());
  test.resize(model.num_views());
  RunRecorder rec{fs::path(e.out), "eval", a.resolved_config,
                  {e.model, e.test}, {"report.json"}, model.config.seed, false};
  rec.record([&] {
    EvalReport report;
    report.per_view_triplet_error = triplet_error(model, test, X, e.threads);
    report.mean_triplet_error = mean(report.per_view_triplet_error);
    if (!e.labels.empty()) {
      const auto labels = load_labels(e.labels);
      report.per_view_knn_error = loo_knn_error(model, labels, e.knn_k, X, e.threads);
      report.mean_knn_error = mean(report.per_view_knn_error);
    }
    std::ofstream out(rec.out_dir / "report.json");
    out << report.to_json().dump(2) << '\n';
  });
}

// --- consistency ---------------------------------------------------------------

void run_consistency(App& a) {
  const auto& c = a.con;
  if (c.out.empty()) throw ConfigError("consistency: --out is required");
  if (c.data.empty() == c.model.empty()) {
    throw ConfigError("consistency: pass exactly one of --data or --model");
  }
  std::vector<Eigen::MatrixXd> dists;
  std::vector<std::string> inputs;
  if (!c.data.empty()) {
    dists = load_view_matrices(c.data);
    inputs.push_back(c.data);
  } else {
    TrainedModel model = load_model(c.model);
    std::optional<Eigen::MatrixXd> features;
    if (!c.features.empty()) features = load_features(c.features);
    const Eigen::MatrixXd* X = features ? &*features : nullptr;
    for (Index v = 0; v < model.num_views(); ++v) {
      dists.push_back(pairwise_squared_distances(model, v, X, c.threads));
    }
    inputs.push_back(c.model);
  }
  RunRecorder rec{fs::path(c.out), "consistency", a.resolved_config,
                  inputs, {"consistency.json"}, c.seed, false};
  rec.record([&] {
    const Eigen::MatrixXd m = consistency_matrix(dists, c.seed, c.probes);
    double sum = 0.0;
    int pairs = 0;
    for (Index x = 0; x < m.rows(); ++x) {
      for (Index y = x + 1; y < m.cols(); ++y) {
        sum += m(x, y);
        ++pairs;
      }
    }
    json j;
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Index col = 0; col < m.cols(); ++col) row.push_back(m(r, col));
      rows.push_back(row);
    }
    j["consistency_matrix"] = rows;
    j["average_pairwise"] = pairs ? sum / pairs : 1.0;
    std::ofstream out(rec.out_dir / "consistency.json");
    out << j.dump(2) << '\n';
  });
}

// --- curve ----------------------------------------------------------------------

struct CurvePoint {
  std::string mode;
  std::uint64_t seed;
  double budget;
  Index view;  // -1 = mean across views
  double error;
};

void run_curve(App& a) {
  const auto& c = a.crv;
  if (c.data.empty() || c.out.empty()) throw ConfigError("curve: --data and --out are required");
  const auto dists = load_view_matrices(c.data);
  const Index num_views = static_cast<Index>(dists.size());
  const auto budgets = parse_double_list(c.budgets, "budgets");
  const auto seeds = parse_index_list(c.seeds, "seeds");
  const auto modes = parse_string_list(c.modes);
  if (modes.empty()) throw ConfigError("curve: --modes is empty");
  if (c.sweep_view >= num_views) throw ConfigError("curve: --sweep-view out of range");

  // Per (seed, view): one master sample; test is the tail, training budgets
  // are nested prefixes, so sets are disjoint by the sampler's dedupe.
  auto per_view_need = [&](Index view) {
    Index max_train = 0;
    for (double b : budgets) {
      const Index train = c.sweep_view < 0 ? static_cast<Index>(b) / num_views
                          : (view == c.sweep_view ? static_cast<Index>(b)
                                                  : static_cast<Index>(c.others));
      max_train = std::max(max_train, train);
    }
    return max_train + static_cast<Index>(c.test_per_view);
  };

  struct Run {
    std::string mode;
    std::uint64_t seed;
    double budget;
  };
  std::vector<Run> runs;
  for (const auto& mode : modes) {
    for (Index s : seeds) {
      for (double b : budgets) runs.push_back({mode, static_cast<std::uint64_t>(s), b});
    }
  }

  RunRecorder rec{fs::path(c.out), "curve", a.resolved_config,
                  {c.data}, {"curve.csv", "gain.json"}, 0, c.solver.deterministic};
  rec.record([&] {
    // Master pools per seed.
    std::map<std::uint64_t, std::vector<std::vector<TripletTerm>>> pools;
    for (Index s : seeds) {
      auto& views = pools[s];
      views.resize(num_views);
      for (Index v = 0; v < num_views; ++v) {
        views[v] = sample_triplets(dists[v], static_cast<int>(v), per_view_need(v),
                                   mix_seed(static_cast<std::uint64_t>(s), 7919 + v));
      }
    }
    std::vector<CurvePoint> points(runs.size() * (num_views + 1));
    parallel_for(0, static_cast<std::ptrdiff_t>(runs.size()), c.solver.threads,
                 [&](std::ptrdiff_t r) {
                   const Run& run = runs[r];
                   const auto& pool = pools.at(run.seed);
                   TripletDataset data;
                   data.num_objects = dists.front().rows();
                   data.views.resize(num_views);
                   std::vector<std::vector<TripletTerm>> test(num_views);
                   for (Index v = 0; v < num_views; ++v) {
                     const Index train =
                         c.sweep_view < 0 ? static_cast<Index>(run.budget) / num_views
                         : (v == c.sweep_view ? static_cast<Index>(run.budget)
                                              : static_cast<Index>(c.others));
                     data.views[v].assign(pool[v].begin(), pool[v].begin() + train);
                     test[v].assign(pool[v].end() - c.test_per_view, pool[v].end());
                   }
                   SolverConfig cfg = a.crv.solver.to_config();
                   cfg.mode = train_mode_from_string(run.mode);
                   cfg.seed = run.seed;
                   cfg.threads = 1;
                   TrainedModel model = train(data, cfg, nullptr);
                   const auto errs = triplet_error(model, test, nullptr, 1);
                   const std::size_t base = r * (num_views + 1);
                   for (Index v = 0; v < num_views; ++v) {
                     points[base + v] = {run.mode, run.seed, run.budget, v, errs[v]};
                   }
                   points[base + num_views] = {run.mode, run.seed, run.budget, -1, mean(errs)};
                 });

    std::ofstream csv(rec.out_dir / "curve.csv");
    csv << std::setprecision(17);
    csv << "mode,seed,budget,view,error\n";
    for (const auto& p : points) {
      csv << p.mode << ',' << p.seed << ',' << p.budget << ',' << p.view << ',' << p.error
          << '\n';
    }

    // Seed-averaged mean curves per mode, in the spec's budget,view,error
    // format, plus AUC gains against independent learning when present.
    std::map<std::string, std::vector<double>> mean_curve;
    for (const auto& mode : modes) {
      auto& curve = mean_curve[mode];
      for (double b : budgets) {
        double sum = 0.0;
        int cnt = 0;
        for (const auto& p : points) {
          if (p.mode == mode && p.view == -1 && p.budget == b) {
            sum += p.error;
            ++cnt;
          }
        }
        curve.push_back(sum / std::max(cnt, 1));
      }
    }
    for (const auto& mode : modes) {
      std::ofstream mode_csv(rec.out_dir / ("curve_" + mode + ".csv"));
      mode_csv << std::setprecision(17);
      mode_csv << "budget,view,error\n";
      for (std::size_t b = 0; b < budgets.size(); ++b) {
        mode_csv << budgets[b] << ",-1," << mean_curve[mode][b] << '\n';
      }
      rec.outputs.push_back("curve_" + mode + ".csv");
    }
    json gains;
    if (mean_curve.count("independent") && budgets.size() >= 2) {
      for (const auto& [mode, curve] : mean_curve) {
        if (mode == "independent") continue;
        gains["gain_" + mode] = performance_gain(budgets, curve, mean_curve["independent"]);
      }
    }
    std::ofstream gout(rec.out_dir / "gain.json");
    gout << gains.dump(2) << '\n';
  });
}

// --- pca -----------------------------------------------------------------------

void run_pca(App& a) {
  const auto& p = a.pca;
  if (p.features.empty() || p.out.empty()) {
    throw ConfigError("pca: --features and --out are required");
  }
  const Eigen::MatrixXd x = load_features(p.features);
  RunRecorder rec{fs::path(p.out), "pca", a.resolved_config,
                  {p.features},
                  {"components.txt", "mean.txt", "eigenvalues.txt", "transformed.tsv"},
                  0, false};
  rec.record([&] {
    const PcaModel model = pca_fit(x, p.out_dim);
    save_matrix(rec.out_dir / "components.txt", model.components);
    save_matrix(rec.out_dir / "mean.txt", model.mean);
    save_matrix(rec.out_dir / "eigenvalues.txt", model.eigenvalues);
    save_features(rec.out_dir / "transformed.tsv", pca_transform(model, x));
  });
}

// --- procrustes -------------------------------------------------------------------

void run_procrustes(App& a) {
  const auto& p = a.pro;
  if (p.landmarks.empty() || p.out.empty()) {
    throw ConfigError("procrustes: --landmarks and --out are required");
  }
  const LandmarkSet set = load_landmarks(p.landmarks);
  const auto views = p.views.empty() ? default_landmark_views() : load_landmark_views(p.views);
  RunRecorder rec{fs::path(p.out), "procrustes", a.resolved_config,
                  {p.landmarks}, {"views.json"}, 0, false};
  if (!p.views.empty()) rec.inputs.push_back(p.views);
  rec.record([&] {
    save_landmark_views(rec.out_dir / "views.json", views);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const std::string name = "dist_view" + std::to_string(v) + ".txt";
      save_matrix(rec.out_dir / name,
                  landmark_distance_matrix(set, views[v].landmarks, p.threads));
      rec.outputs.push_back(name);
    }
  });
}

// --- broadcast ----------------------------------------------------------------------

void run_broadcast(App& a) {
  const auto& b = a.brd;
  if (b.out.empty()) throw ConfigError("broadcast: --out is required");
  std::vector<std::vector<TripletTerm>> views;
  std::vector<std::string> inputs;
  auto add_partition = [&](Index view, Index target, const std::vector<Index>& sim,
                           const std::vector<Index>& dis) {
    if (view < 0) throw ConfigError("broadcast: negative view id");
    if (static_cast<std::size_t>(view) >= views.size()) views.resize(view + 1);
    auto triplets = partition_to_triplets(target, sim, dis, static_cast<int>(view));
    views[view].insert(views[view].end(), triplets.begin(), triplets.end());
  };
  if (!b.partitions.empty()) {
    inputs.push_back(b.partitions);
    std::ifstream in(b.partitions);
    if (!in) throw DataError("cannot open for reading: " + b.partitions);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto pos = line.find_first_not_of(" \t\r");
      if (pos == std::string::npos || line[pos] == '#') continue;
      std::istringstream ss(line);
      long long view, target;
      std::string sim_csv, dis_csv;
      if (!(ss >> view >> target >> sim_csv >> dis_csv)) {
        throw DataError(b.partitions + ":" + std::to_string(line_no) +
                        ": expected `view target sim,... dis,...`");
      }
      add_partition(view, target, parse_index_list(sim_csv, "similar"),
                    parse_index_list(dis_csv, "dissimilar"));
    }
  } else {
    if (b.target < 0 || b.similar.empty() || b.dissimilar.empty()) {
      throw ConfigError("broadcast: need --partitions or --target/--similar/--dissimilar");
    }
    add_partition(b.view, b.target, parse_index_list(b.similar, "similar"),
                  parse_index_list(b.dissimilar, "dissimilar"));
  }
  RunRecorder rec{fs::path(b.out), "broadcast", a.resolved_config,
                  inputs, {"triplets.tsv"}, 0, false};
  rec.record([&] { save_triplets(rec.out_dir / "triplets.tsv", views); });
}

// --- replay --------------------------------------------------------------------------

int dispatch(App& a, const std::string& name);

int run_replay(App& a) {
  const auto& r = a.rep;
  if (r.manifest.empty()) throw ConfigError("replay: manifest path required");
  std::ifstream in(r.manifest);
  if (!in) throw DataError("cannot open manifest: " + r.manifest);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(r.manifest + ": " + e.what());
  }
  const std::string sub = m.at("subcommand").get<std::string>();
  if (sub == "replay" || !a.commands.count(sub)) {
    throw DataError("replay: manifest names unknown subcommand `" + sub + "`");
  }
  a.commands[sub].second->load(m.at("config"));
  if (!r.out.empty()) {
    json out_override;
    out_override["out"] = r.out;
    a.commands[sub].second->load(out_override);
  }
  return dispatch(a, sub);
}

int dispatch(App& a, const std::string& name) {
  // Apply config-file values to unset flags before any handler reads them.
  a.resolved_config = a.commands.at(name).second->resolve();
  if (name == "generate") run_generate(a);
  else if (name == "sample") run_sample(a);
  else if (name == "split") run_split(a);
  else if (name == "train") run_train(a);
  else if (name == "cv") run_cv(a);
  else if (name == "eval") run_eval(a);
  else if (name == "consistency") run_consistency(a);
  else if (name == "curve") run_curve(a);
  else if (name == "pca") run_pca(a);
  else if (name == "procrustes") run_procrustes(a);
  else if (name == "broadcast") run_broadcast(a);
  else if (name == "replay") return run_replay(a);
  else throw ConfigError("unknown subcommand: " + name);
  return kExitOk;
}

void build_cli(App& a) {
  a.cli.require_subcommand(1);

  CLI::App* sub = nullptr;
  {
    auto& o = a.add_command("generate", "synthesize a multi-view benchmark dataset", sub);
    o.add("--kind", a.gen.kind, "uniform | clustered");
    o.add("--n", a.gen.n, "number of objects");
    o.add("--dim", a.gen.dim, "ambient dimension");
    o.add("--subspace-dims", a.gen.subspace_dims, "per-view subspace dimensions (csv)");
    o.add("--clusters", a.gen.clusters, "cluster count (clustered)");
    o.add("--variance", a.gen.variance, "cluster variance (clustered)");
    o.add("--box-side", a.gen.box_side, "center box side length (clustered)");
    o.add("--seed", a.gen.seed, "RNG seed");
    o.add("--threads", a.gen.threads, "worker cap");
    o.add_flag("--deterministic", a.gen.deterministic, "bit-stable outputs");
    o.add("--out", a.gen.out, "output directory");
  }
  {
    auto& o = a.add_command("sample", "sample oriented triplets from view oracles", sub);
    o.add("--data", a.smp.data, "directory with dist_view<t>.txt");
    o.add("--count", a.smp.count, "triplets per view");
    o.add("--counts", a.smp.counts, "per-view counts (csv, overrides --count)");
    o.add("--seed", a.smp.seed, "RNG seed");
    o.add("--out", a.smp.out, "output directory");
  }
  {
    auto& o = a.add_command("split", "split triplets into train/test", sub);
    o.add("--triplets", a.spl.triplets, "triplet file");
    o.add("--test-fraction", a.spl.test_fraction, "held-out fraction");
    o.add_flag("--equalize", a.spl.equalize, "equalize per-view train counts");
    o.add("--seed", a.spl.seed, "RNG seed");
    o.add("--out", a.spl.out, "output directory");
  }
  {
    auto& o = a.add_command("train", "train a model (joint, independent, or pooled)", sub);
    o.add("--triplets", a.trn.triplets, "training triplet file");
    o.add("--features", a.trn.features, "optional feature file");
    o.add("--num-objects", a.trn.num_objects, "object count (featureless data)");
    o.add_flag("--progress", a.trn.progress, "emit progress records to stderr");
    a.trn.solver.register_options(o);
    o.add("--out", a.trn.out, "model output directory");
  }
  {
    auto& o = a.add_command("cv", "cross-validate the regularization product", sub);
    o.add("--triplets", a.cvc.triplets, "training triplet file");
    o.add("--features", a.cvc.features, "optional feature file");
    o.add("--num-objects", a.cvc.num_objects, "object count (featureless data)");
    o.add("--grid", a.cvc.grid, "candidate products (csv; default 1e-5..1e5)");
    o.add("--folds", a.cvc.folds, "fold count");
    a.cvc.solver.register_options(o);
    o.add("--out", a.cvc.out, "output directory");
  }
  {
    auto& o = a.add_command("eval", "evaluate a model on held-out triplets", sub);
    o.add("--model", a.evl.model, "model directory");
    o.add("--test", a.evl.test, "test triplet file");
    o.add("--features", a.evl.features, "optional feature file");
    o.add("--labels", a.evl.labels, "optional label file (enables LOO k-NN)");
    o.add("--knn-k", a.evl.knn_k, "neighbors for LOO classification");
    o.add("--threads", a.evl.threads, "worker cap");
    o.add("--out", a.evl.out, "output directory");
  }
  {
    auto& o = a.add_command("consistency", "between-view triplet consistency", sub);
    o.add("--data", a.con.data, "oracle directory (dist_view<t>.txt)");
    o.add("--model", a.con.model, "model directory (learned metrics)");
    o.add("--features", a.con.features, "features for a featured model");
    o.add("--probes", a.con.probes, "sampled probes when N > 50");
    o.add("--seed", a.con.seed, "probe RNG seed");
    o.add("--threads", a.con.threads, "worker cap");
    o.add("--out", a.con.out, "output directory");
  }
  {
    auto& o = a.add_command("curve", "triplet-error learning curves over budgets", sub);
    o.add("--data", a.crv.data, "oracle directory");
    o.add("--budgets", a.crv.budgets, "total training budgets (csv)");
    o.add("--sweep-view", a.crv.sweep_view, "budget applies to this view only");
    o.add("--others", a.crv.others, "per-view budget for non-swept views");
    o.add("--test-per-view", a.crv.test_per_view, "held-out triplets per view");
    o.add("--modes", a.crv.modes, "methods to run (csv)");
    o.add("--seeds", a.crv.seeds, "seeds (csv)");
    a.crv.solver.register_options(o);
    o.add("--out", a.crv.out, "output directory");
  }
  {
    auto& o = a.add_command("pca", "fit PCA and emit transformed features", sub);
    o.add("--features", a.pca.features, "feature file");
    o.add("--out-dim", a.pca.out_dim, "components to keep");
    o.add("--out", a.pca.out, "output directory");
  }
  {
    auto& o = a.add_command("procrustes", "landmark-subset view oracles", sub);
    o.add("--landmarks", a.pro.landmarks, "landmark file");
    o.add("--views", a.pro.views, "view-subset JSON (default: built-in five)");
    o.add("--threads", a.pro.threads, "worker cap");
    o.add("--out", a.pro.out, "output directory");
  }
  {
    auto& o = a.add_command("broadcast", "expand similar/dissimilar partitions to triplets",
                            sub);
    o.add("--target", a.brd.target, "anchor object");
    o.add("--similar", a.brd.similar, "similar set (csv)");
    o.add("--dissimilar", a.brd.dissimilar, "dissimilar set (csv)");
    o.add("--view", a.brd.view, "view id");
    o.add("--partitions", a.brd.partitions, "partition file (view target sim dis per line)");
    o.add("--out", a.brd.out, "output directory");
  }
  {
    auto& o = a.add_command("replay", "re-run a recorded manifest", sub);
    static_cast<void>(o);
    auto* rep_cmd = a.commands["replay"].first;
    rep_cmd->add_option("manifest", a.rep.manifest, "manifest.json path")->required();
    rep_cmd->add_option("--out", a.rep.out, "override output directory");
  }
}

}  // namespace

int main(int argc, char** argv) {
  App app;
  build_cli(app);
  try {
    app.cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.cli.exit(e);
  } catch (const CLI::ParseError& e) {
    app.cli.exit(e);
    return kExitUsage;
  }
  try {
    for (const auto& [name, cmd] : app.commands) {
      if (cmd.first->parsed()) return dispatch(app, name);
    }
    std::cerr << app.cli.help() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
