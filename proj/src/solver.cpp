#include "mvml/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alternating.hpp"
#include "mvml/rng.hpp"

namespace mvml {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::joint: return "joint";
    case TrainMode::independent: return "independent";
    case TrainMode::pooled: return "pooled";
  }
  return "joint";
}

std::string to_string(BaselineParam param) {
  switch (param) {
    case BaselineParam::auto_default: return "auto";
    case BaselineParam::factored: return "factored";
    case BaselineParam::full_psd: return "full_psd";
  }
  return "auto";
}

BaselineParam resolve_baseline_param(BaselineParam param, TrainMode mode) {
  if (param != BaselineParam::auto_default) return param;
  return mode == TrainMode::pooled ? BaselineParam::full_psd : BaselineParam::factored;
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "joint") return TrainMode::joint;
  if (s == "independent") return TrainMode::independent;
  if (s == "pooled") return TrainMode::pooled;
  throw ConfigError("unknown mode: " + s);
}

BaselineParam baseline_param_from_string(const std::string& s) {
  if (s == "auto") return BaselineParam::auto_default;
  if (s == "factored") return BaselineParam::factored;
  if (s == "full_psd") return BaselineParam::full_psd;
  throw ConfigError("unknown baseline parametrization: " + s);
}

void SolverConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (!(beta > 0.0) || !(gamma > 0.0)) throw ConfigError("beta and gamma must be > 0");
  if (!(eta0 > 0.0)) throw ConfigError("eta0 must be > 0");
  if (m_max < 1) throw ConfigError("m_max must be >= 1");
  if (outer_max < 1) throw ConfigError("outer_max must be >= 1");
  if (rel_tol < 0.0) throw ConfigError("rel_tol must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(divergence_factor > 1.0)) throw ConfigError("divergence_factor must be > 1");
}

namespace {

double loss_sum(const std::vector<std::vector<TripletTerm>>& views, const Eigen::MatrixXd* X,
                const Eigen::MatrixXd& L, const std::vector<Eigen::MatrixXd>& Ms) {
  double total = 0.0;
  for (std::size_t t = 0; t < views.size(); ++t) {
    total += detail::view_loss(L, Ms[t], views[t], X);
  }
  return total;
}

double objective_raw(const std::vector<std::vector<TripletTerm>>& views,
                     const Eigen::MatrixXd* X, const Eigen::MatrixXd& L,
                     const std::vector<Eigen::MatrixXd>& Ms, double beta, double gamma) {
  double trace_sum = 0.0;
  for (const auto& M : Ms) trace_sum += M.trace();
  return loss_sum(views, X, L, Ms) + gamma * trace_sum + beta * L.squaredNorm();
}

using detail::gaussian_init;

/// Loss subgradient in L over several views plus the ridge 2*coef*L.
/// Deterministic mode keeps the file-order sequential sum; otherwise the
/// triplet lists are cut into chunks reduced in fixed chunk order.
Eigen::MatrixXd grad_transform_impl(const Eigen::MatrixXd& L,
                                    const std::vector<Eigen::MatrixXd>& Ms,
                                    const std::vector<std::vector<TripletTerm>>& views,
                                    const Eigen::MatrixXd* X, double ridge_coef,
                                    int threads, bool deterministic) {
  Eigen::MatrixXd G = 2.0 * ridge_coef * L;
  if (deterministic || threads <= 1) {
    for (std::size_t t = 0; t < views.size(); ++t) {
      detail::accumulate_grad_L(G, L, Ms[t], views[t].data(),
                                views[t].data() + views[t].size(), X);
    }
    return G;
  }
  struct Chunk {
    std::size_t view;
    const TripletTerm* first;
    const TripletTerm* last;
  };
  std::vector<Chunk> chunks;
  for (std::size_t t = 0; t < views.size(); ++t) {
    const std::size_t n = views[t].size();
    if (n == 0) continue;
    const std::size_t per = std::max<std::size_t>(1, n / (2 * static_cast<std::size_t>(threads)));
    for (std::size_t lo = 0; lo < n; lo += per) {
      const std::size_t hi = std::min(n, lo + per);
      chunks.push_back({t, views[t].data() + lo, views[t].data() + hi});
    }
  }
  std::vector<Eigen::MatrixXd> partials(chunks.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(chunks.size()), threads, [&](std::ptrdiff_t c) {
    partials[c] = Eigen::MatrixXd::Zero(L.rows(), L.cols());
    detail::accumulate_grad_L(partials[c], L, Ms[chunks[c].view], chunks[c].first,
                              chunks[c].last, X);
  });
  for (const auto& p : partials) G += p;
  return G;
}

struct RunResult {
  Eigen::MatrixXd transform;
  std::vector<Eigen::MatrixXd> metrics;
  std::vector<double> trace;
};

/// Full joint run of Algorithm-style alternation over all views.
RunResult run_joint(const std::vector<std::vector<TripletTerm>>& views,
                    const Eigen::MatrixXd* X, Index input_dim, const SolverConfig& cfg,
                    std::ostream* progress) {
  const Index d = cfg.embed_dim;
  if (d > input_dim) {
    throw ConfigError("embed_dim " + std::to_string(d) + " exceeds input dimension " +
                      std::to_string(input_dim));
  }
  Eigen::MatrixXd L;
  if (cfg.init_transform) {
    L = *cfg.init_transform;
    if (L.rows() != input_dim || L.cols() != d) throw ShapeError("init_transform shape mismatch");
  } else {
    L = gaussian_init(input_dim, d, cfg.seed);
  }
  std::vector<Eigen::MatrixXd> Ms(views.size(), Eigen::MatrixXd::Identity(d, d));

  detail::AltCallbacks cb;
  cb.objective = [&]() { return objective_raw(views, X, L, Ms, cfg.beta, cfg.gamma); };
  cb.grad_transform = [&]() {
    return grad_transform_impl(L, Ms, views, X, cfg.beta, cfg.threads, cfg.deterministic);
  };
  cb.grad_metric = [&](std::size_t t) {
    Eigen::MatrixXd Gm = cfg.gamma * Eigen::MatrixXd::Identity(d, d);
    detail::accumulate_grad_M(Gm, L, Ms[t], views[t].data(), views[t].data() + views[t].size(),
                              X);
    return Gm;
  };
  RunResult out;
  out.trace = detail::run_alternating(L, Ms, cb, cfg, !cfg.freeze_transform, true, progress);
  out.transform = std::move(L);
  out.metrics = std::move(Ms);
  return out;
}

/// Single-view embedding run: minimize the view's hinge loss plus
/// ridge * ||L||_F^2 over the transform alone (metric pinned to identity).
/// This is the trace-regularized single-metric problem under the factored
/// substitution M = L L^T, where tr(M) = ||L||_F^2.
RunResult run_factored(const std::vector<TripletTerm>& triplets, const Eigen::MatrixXd* X,
                       Index input_dim, const SolverConfig& cfg, double ridge,
                       std::ostream* progress) {
  const Index d = cfg.embed_dim;
  if (d > input_dim) {
    throw ConfigError("embed_dim " + std::to_string(d) + " exceeds input dimension " +
                      std::to_string(input_dim));
  }
  Eigen::MatrixXd L = gaussian_init(input_dim, d, cfg.seed);
  std::vector<Eigen::MatrixXd> Ms(1, Eigen::MatrixXd::Identity(d, d));
  const std::vector<std::vector<TripletTerm>> views{triplets};

  detail::AltCallbacks cb;
  cb.objective = [&]() {
    return detail::view_loss(L, Ms[0], triplets, X) + ridge * L.squaredNorm();
  };
  cb.grad_transform = [&]() {
    return grad_transform_impl(L, Ms, views, X, ridge, cfg.threads, cfg.deterministic);
  };
  RunResult out;
  out.trace = detail::run_alternating(L, Ms, cb, cfg, true, false, progress);
  out.transform = std::move(L);
  out.metrics = std::move(Ms);
  return out;
}

/// Single full-PSD metric over the input space with the transform frozen at
/// identity; the reported objective is the joint objective restricted to
/// L = I (its constant beta * H included). Featureless data takes the
/// sparse coordinate-difference kernels.
RunResult run_full_metric(const std::vector<TripletTerm>& triplets, const Eigen::MatrixXd* X,
                          Index input_dim, const SolverConfig& cfg, std::ostream* progress) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(input_dim, input_dim);
  std::vector<Eigen::MatrixXd> Ms(1, Eigen::MatrixXd::Identity(input_dim, input_dim));
  const std::vector<std::vector<TripletTerm>> views{triplets};

  detail::AltCallbacks cb;
  cb.objective = [&]() {
    const double loss = X ? detail::view_loss(L, Ms[0], triplets, X)
                          : detail::view_loss_identity(Ms[0], triplets);
    return loss + cfg.gamma * Ms[0].trace() + cfg.beta * L.squaredNorm();
  };
  cb.grad_metric = [&](std::size_t) {
    Eigen::MatrixXd Gm = cfg.gamma * Eigen::MatrixXd::Identity(input_dim, input_dim);
    if (X) {
      detail::accumulate_grad_M(Gm, L, Ms[0], triplets.data(),
                                triplets.data() + triplets.size(), X);
    } else {
      detail::accumulate_grad_M_identity(Gm, Ms[0], triplets.data(),
                                         triplets.data() + triplets.size());
    }
    return Gm;
  };
  RunResult out;
  out.trace = detail::run_alternating(L, Ms, cb, cfg, false, true, progress);
  out.transform = std::move(L);
  out.metrics = std::move(Ms);
  return out;
}

std::vector<TripletTerm> merge_views(const std::vector<std::vector<TripletTerm>>& views) {
  std::vector<TripletTerm> merged;
  for (const auto& v : views) merged.insert(merged.end(), v.begin(), v.end());
  return merged;
}

/// Element-wise sum of traces of different lengths, shorter ones carrying
/// their final value forward.
std::vector<double> sum_traces(const std::vector<std::vector<double>>& traces) {
  std::size_t len = 0;
  for (const auto& t : traces) len = std::max(len, t.size());
  std::vector<double> total(len, 0.0);
  for (const auto& t : traces) {
    for (std::size_t i = 0; i < len; ++i) total[i] += t[std::min(i, t.size() - 1)];
  }
  return total;
}

TrainedModel finalize_joint(RunResult run, const SolverConfig& cfg) {
  TrainedModel model;
  model.mode = TrainMode::joint;
  model.baseline_param = cfg.baseline_param;
  model.config = cfg;
  model.objective_trace = std::move(run.trace);

  GlobalTransform L(std::move(run.transform));
  std::vector<LocalMetric> Ms;
  Ms.reserve(run.metrics.size());
  for (std::size_t t = 0; t < run.metrics.size(); ++t) {
    Ms.emplace_back(std::move(run.metrics[t]), static_cast<int>(t));
  }
  // Normalize the scale split between L and the metrics; skip when
  // degenerate (zero transform or all-zero metrics).
  double trace_sum = 0.0;
  for (const auto& M : Ms) trace_sum += M.matrix.trace();
  if (L.matrix.squaredNorm() > 0.0 && trace_sum > 0.0) {
    RegularizationParams p(cfg.beta, cfg.gamma);
    auto balanced = rescale_balance(L, Ms, p);
    L = std::move(balanced.first);
    Ms = std::move(balanced.second);
  }
  model.transform = std::move(L);
  model.metrics = std::move(Ms);
  return model;
}

}  // namespace

double objective(const TripletDataset& data, const GlobalTransform& L,
                 const std::vector<LocalMetric>& Ms, double beta, double gamma) {
  if (static_cast<Index>(Ms.size()) != data.num_views()) {
    throw ShapeError("objective: metric count != view count");
  }
  RegularizationParams p(beta, gamma);
  double total = p.beta * L.matrix.squaredNorm();
  const Eigen::MatrixXd* X = data.feature_ptr();
  for (std::size_t t = 0; t < Ms.size(); ++t) {
    if (Ms[t].dim() != L.embed_dim()) throw ShapeError("objective: M dim != L cols");
    total += detail::view_loss(L.matrix, Ms[t].matrix, data.views[t], X);
    total += p.gamma * Ms[t].matrix.trace();
  }
  return total;
}

TrainedModel train(const TripletDataset& data, const SolverConfig& cfg,
                   std::ostream* progress) {
  cfg.validate();
  data.validate();
  if (data.total_triplets() < 1) throw DataError("train: dataset has no triplets");
  const Index input_dim = data.input_dim();
  const Eigen::MatrixXd* X = data.feature_ptr();
  const auto num_views = data.views.size();

  switch (cfg.mode) {
    case TrainMode::joint:
      return finalize_joint(run_joint(data.views, X, input_dim, cfg, progress), cfg);

    case TrainMode::independent: {
      const BaselineParam param = resolve_baseline_param(cfg.baseline_param, cfg.mode);
      TrainedModel model;
      model.mode = cfg.mode;
      model.baseline_param = param;
      model.config = cfg;
      model.transform = GlobalTransform::identity(input_dim);
      model.identity_transform = true;
      model.metrics.resize(num_views);
      std::vector<std::vector<double>> traces(num_views);
      // Per-view subproblems are disjoint; run them in parallel. Every view
      // shares cfg.seed, so a separately-trained single view reproduces its
      // subproblem exactly.
      parallel_for(0, static_cast<std::ptrdiff_t>(num_views), cfg.threads,
                   [&](std::ptrdiff_t t) {
                     SolverConfig view_cfg = cfg;
                     view_cfg.threads = 1;
                     if (param == BaselineParam::factored) {
                       RunResult r = run_factored(data.views[t], X, input_dim, view_cfg,
                                                  cfg.gamma, nullptr);
                       Eigen::MatrixXd K = r.transform * r.transform.transpose();
                       model.metrics[t] =
                           LocalMetric(0.5 * (K + K.transpose()), static_cast<int>(t));
                       traces[t] = std::move(r.trace);
                     } else {
                       RunResult r = run_full_metric(data.views[t], X, input_dim, view_cfg,
                                                     nullptr);
                       model.metrics[t] =
                           LocalMetric(std::move(r.metrics[0]), static_cast<int>(t));
                       traces[t] = std::move(r.trace);
                     }
                   });
      model.objective_trace = sum_traces(traces);
      return model;
    }

    case TrainMode::pooled: {
      const BaselineParam param = resolve_baseline_param(cfg.baseline_param, cfg.mode);
      const std::vector<TripletTerm> merged = merge_views(data.views);
      TrainedModel model;
      model.mode = cfg.mode;
      model.baseline_param = param;
      model.config = cfg;
      if (param == BaselineParam::factored) {
        RunResult r = run_factored(merged, X, input_dim, cfg, cfg.gamma, progress);
        model.objective_trace = std::move(r.trace);
        model.transform = GlobalTransform(std::move(r.transform));
        const Index d = cfg.embed_dim;
        for (std::size_t t = 0; t < num_views; ++t) {
          model.metrics.emplace_back(Eigen::MatrixXd::Identity(d, d), static_cast<int>(t));
        }
      } else {
        RunResult r = run_full_metric(merged, X, input_dim, cfg, progress);
        model.objective_trace = std::move(r.trace);
        model.transform = GlobalTransform::identity(input_dim);
        model.identity_transform = true;
        for (std::size_t t = 0; t < num_views; ++t) {
          model.metrics.emplace_back(r.metrics[0], static_cast<int>(t));
        }
      }
      return model;
    }
  }
  throw ConfigError("train: unknown mode");
}

std::size_t TrainedModel::parameter_count() const {
  const auto h = static_cast<std::size_t>(transform.input_dim());
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto t = static_cast<std::size_t>(metrics.size());
  switch (mode) {
    case TrainMode::joint: return h * d + t * d * d;
    case TrainMode::independent:
      return baseline_param == BaselineParam::factored ? t * h * d : t * h * h;
    case TrainMode::pooled:
      return baseline_param == BaselineParam::factored ? h * d : h * h;
  }
  return 0;
}

double TrainedModel::distance(Index view, Index i, Index j, const Eigen::MatrixXd* X) const {
  if (view < 0 || view >= num_views()) throw ShapeError("distance: view out of range");
  const Eigen::MatrixXd& M = metrics[view].matrix;
  if (X == nullptr && identity_transform) {
    // Kernel shortcut: (e_i - e_j)^T M (e_i - e_j).
    return detail::clamp_distance(M(i, i) + M(j, j) - 2.0 * M(i, j));
  }
  const Eigen::VectorXd u = detail::transformed_diff(transform.matrix, X, i, j);
  return detail::clamp_distance(u.dot(M * u));
}

std::vector<double> default_cv_grid() {
  std::vector<double> grid;
  for (int e = -5; e <= 5; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

namespace {

double validation_error(const TrainedModel& model,
                        const std::vector<std::vector<TripletTerm>>& val_views,
                        const Eigen::MatrixXd* X) {
  double sum = 0.0;
  int counted = 0;
  for (std::size_t t = 0; t < val_views.size(); ++t) {
    if (val_views[t].empty()) continue;
    Index wrong = 0;
    for (const auto& tr : val_views[t]) {
      if (model.distance(static_cast<Index>(t), tr.i, tr.j, X) >=
          model.distance(static_cast<Index>(t), tr.i, tr.k, X)) {
        ++wrong;
      }
    }
    sum += static_cast<double>(wrong) / static_cast<double>(val_views[t].size());
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

}  // namespace

CrossValidationResult cross_validate(const TripletDataset& data, const SolverConfig& base,
                                     const std::vector<double>& grid, int folds) {
  base.validate();
  data.validate();
  if (grid.empty()) throw ConfigError("cross_validate: empty candidate grid");
  if (folds < 2) throw ConfigError("cross_validate: need at least 2 folds");
  const auto num_views = data.views.size();
  for (std::size_t t = 0; t < num_views; ++t) {
    if (static_cast<int>(data.views[t].size()) < folds) {
      throw DataError("cross_validate: view " + std::to_string(t) + " has fewer than " +
                      std::to_string(folds) + " triplets");
    }
  }
  // Seeded uniform fold assignment per view.
  std::vector<std::vector<int>> fold_of(num_views);
  for (std::size_t t = 0; t < num_views; ++t) {
    std::vector<std::size_t> order(data.views[t].size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(mix_seed(base.seed, 0xC5u), t));
    rng.shuffle(order);
    fold_of[t].resize(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      fold_of[t][order[pos]] = static_cast<int>(pos % folds);
    }
  }

  CrossValidationResult result;
  result.grid = grid;
  result.mean_validation_error.assign(grid.size(), 0.0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    if (!(grid[c] > 0.0)) throw ConfigError("cross_validate: candidates must be > 0");
    SolverConfig cfg = base;
    cfg.beta = 1.0;  // only the product matters; search it through gamma
    cfg.gamma = grid[c];
    double fold_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      TripletDataset train_data;
      train_data.num_objects = data.num_objects;
      train_data.features = data.features;
      train_data.labels = data.labels;
      train_data.views.resize(num_views);
      std::vector<std::vector<TripletTerm>> val_views(num_views);
      for (std::size_t t = 0; t < num_views; ++t) {
        for (std::size_t idx = 0; idx < data.views[t].size(); ++idx) {
          if (fold_of[t][idx] == f) {
            val_views[t].push_back(data.views[t][idx]);
          } else {
            train_data.views[t].push_back(data.views[t][idx]);
          }
        }
      }
      SolverConfig fold_cfg = cfg;
      fold_cfg.seed = mix_seed(base.seed, 1000 + static_cast<std::uint64_t>(f));
      TrainedModel model = train(train_data, fold_cfg, nullptr);
      fold_sum += validation_error(model, val_views, data.feature_ptr());
    }
    result.mean_validation_error[c] = fold_sum / folds;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.size(); ++c) {
    const double err = result.mean_validation_error[c];
    const double best_err = result.mean_validation_error[best];
    if (err < best_err || (err == best_err && grid[c] < grid[best])) best = c;
  }
  result.best_product = grid[best];
  return result;
}

}  // namespace mvml
