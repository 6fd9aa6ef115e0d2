#include "mvml/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "alternating.hpp"
#include "mvml/eval.hpp"

namespace mvml {

void SupervisedTask::validate() const {
  const Index n = num_objects();
  if (n < 1) throw DataError("task has no objects");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("task label count != objects");
  if (static_cast<Index>(target_neighbors.size()) != n) {
    throw ShapeError("task target-neighbor count != objects");
  }
  for (Index i = 0; i < n; ++i) {
    if (target_neighbors[i].empty()) throw DataError("object without target neighbors");
    for (Index j : target_neighbors[i]) {
      if (j < 0 || j >= n) throw DataError("target neighbor index out of range");
      if (j == i) throw DataError("object is its own target neighbor");
      if (labels[j] != labels[i]) throw DataError("target neighbor with different class");
    }
  }
}

std::vector<std::vector<Index>> build_target_neighbors(const Eigen::MatrixXd& features,
                                                       const std::vector<int>& labels,
                                                       int kappa) {
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("label count != feature rows");
  if (kappa < 1) throw ConfigError("kappa must be >= 1");
  std::map<int, std::vector<Index>> members;
  for (Index i = 0; i < n; ++i) members[labels[i]].push_back(i);
  for (const auto& [label, m] : members) {
    if (static_cast<int>(m.size()) <= kappa) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(m.size()) +
                      " members, need more than kappa = " + std::to_string(kappa));
    }
  }
  std::vector<std::vector<Index>> neighbors(n);
  for (Index i = 0; i < n; ++i) {
    const auto& pool = members[labels[i]];
    std::vector<std::pair<double, Index>> ranked;
    ranked.reserve(pool.size() - 1);
    for (Index j : pool) {
      if (j == i) continue;
      ranked.emplace_back((features.row(i) - features.row(j)).squaredNorm(), j);
    }
    std::partial_sort(ranked.begin(), ranked.begin() + kappa, ranked.end());
    neighbors[i].reserve(kappa);
    for (int r = 0; r < kappa; ++r) neighbors[i].push_back(ranked[r].second);
  }
  return neighbors;
}

std::vector<TripletTerm> class_triplets(const std::vector<int>& labels,
                                        const std::vector<std::vector<Index>>& target_neighbors,
                                        int view, Index cap, std::uint64_t seed) {
  const auto n = static_cast<Index>(labels.size());
  if (static_cast<Index>(target_neighbors.size()) != n) {
    throw ShapeError("target-neighbor count != labels");
  }
  // Impostors per class, and the flat triplet count per anchor.
  std::map<int, std::vector<Index>> impostors;
  {
    std::set<int> classes(labels.begin(), labels.end());
    for (int c : classes) {
      auto& v = impostors[c];
      for (Index k = 0; k < n; ++k) {
        if (labels[k] != c) v.push_back(k);
      }
    }
  }
  std::vector<std::uint64_t> prefix(n + 1, 0);
  for (Index i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + target_neighbors[i].size() * impostors[labels[i]].size();
  }
  const std::uint64_t total = prefix[n];
  auto decode = [&](std::uint64_t flat) {
    const auto it = std::upper_bound(prefix.begin(), prefix.end(), flat);
    const Index i = static_cast<Index>(it - prefix.begin()) - 1;
    const std::uint64_t rem = flat - prefix[i];
    const auto& imp = impostors[labels[i]];
    const Index j = target_neighbors[i][rem / imp.size()];
    const Index k = imp[rem % imp.size()];
    return TripletTerm(i, j, k, view);
  };
  std::vector<TripletTerm> out;
  if (cap <= 0 || static_cast<std::uint64_t>(cap) >= total) {
    out.reserve(total);
    for (std::uint64_t f = 0; f < total; ++f) out.push_back(decode(f));
    return out;
  }
  // Seeded sample of distinct flat indices, emitted in ascending order.
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  while (chosen.size() < static_cast<std::size_t>(cap)) chosen.insert(rng.uniform_int(total));
  out.reserve(cap);
  for (std::uint64_t f : chosen) out.push_back(decode(f));
  return out;
}

namespace {

/// Target-neighbor pull: adds mu * grad of sum ||L^T(x_i - x_j)||^2_M over
/// all (i, target neighbor j) pairs; returns the summed pull distances.
double accumulate_pull_L(Eigen::MatrixXd& G, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& M, const SupervisedTask& task, double mu) {
  double total = 0.0;
  for (Index i = 0; i < task.num_objects(); ++i) {
    for (Index j : task.target_neighbors[i]) {
      const Eigen::VectorXd d = (task.features.row(i) - task.features.row(j)).transpose();
      const Eigen::VectorXd u = L.transpose() * d;
      total += u.dot(M * u);
      G.noalias() += (2.0 * mu) * d * (M * u).transpose();
    }
  }
  return total;
}

void accumulate_pull_M(Eigen::MatrixXd& Gm, const Eigen::MatrixXd& L,
                       const SupervisedTask& task, double mu) {
  for (Index i = 0; i < task.num_objects(); ++i) {
    for (Index j : task.target_neighbors[i]) {
      const Eigen::VectorXd u =
          L.transpose() * (task.features.row(i) - task.features.row(j)).transpose();
      Gm.noalias() += mu * u * u.transpose();
    }
  }
}

double pull_value(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                  const SupervisedTask& task) {
  double total = 0.0;
  for (Index i = 0; i < task.num_objects(); ++i) {
    for (Index j : task.target_neighbors[i]) {
      const Eigen::VectorXd u =
          L.transpose() * (task.features.row(i) - task.features.row(j)).transpose();
      total += u.dot(M * u);
    }
  }
  return total;
}

}  // namespace

TrainedModel train_supervised(const std::vector<SupervisedTask>& tasks,
                              const SolverConfig& cfg, double mu,
                              Index triplet_cap, std::ostream* progress) {
  cfg.validate();
  if (tasks.empty()) throw DataError("train_supervised: no tasks");
  if (mu < 0.0) throw ConfigError("train_supervised: mu must be >= 0");
  const Index h = tasks.front().features.cols();
  for (const auto& task : tasks) {
    task.validate();
    if (task.features.cols() != h) throw ShapeError("tasks disagree on feature dimension");
  }
  const Index d = cfg.embed_dim;
  if (d > h) throw ConfigError("embed_dim exceeds feature dimension");

  const auto num_tasks = tasks.size();
  std::vector<std::vector<TripletTerm>> triplets(num_tasks);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    triplets[t] = class_triplets(tasks[t].labels, tasks[t].target_neighbors,
                                 static_cast<int>(t), triplet_cap,
                                 mix_seed(cfg.seed, 0xCA9 + t));
  }

  Eigen::MatrixXd L = cfg.init_transform ? *cfg.init_transform
                                         : detail::gaussian_init(h, d, cfg.seed);
  if (L.rows() != h || L.cols() != d) throw ShapeError("init_transform shape mismatch");
  std::vector<Eigen::MatrixXd> Ms(num_tasks, Eigen::MatrixXd::Identity(d, d));

  detail::AltCallbacks cb;
  cb.objective = [&]() {
    double total = cfg.beta * L.squaredNorm();
    for (std::size_t t = 0; t < num_tasks; ++t) {
      total += detail::view_loss(L, Ms[t], triplets[t], &tasks[t].features);
      if (mu > 0.0) total += mu * pull_value(L, Ms[t], tasks[t]);
      total += cfg.gamma * Ms[t].trace();
    }
    return total;
  };
  cb.grad_transform = [&]() {
    Eigen::MatrixXd G = 2.0 * cfg.beta * L;
    for (std::size_t t = 0; t < num_tasks; ++t) {
      detail::accumulate_grad_L(G, L, Ms[t], triplets[t].data(),
                                triplets[t].data() + triplets[t].size(), &tasks[t].features);
      if (mu > 0.0) accumulate_pull_L(G, L, Ms[t], tasks[t], mu);
    }
    return G;
  };
  cb.grad_metric = [&](std::size_t t) {
    Eigen::MatrixXd Gm = cfg.gamma * Eigen::MatrixXd::Identity(d, d);
    detail::accumulate_grad_M(Gm, L, Ms[t], triplets[t].data(),
                              triplets[t].data() + triplets[t].size(), &tasks[t].features);
    if (mu > 0.0) accumulate_pull_M(Gm, L, tasks[t], mu);
    return Gm;
  };

  TrainedModel model;
  model.mode = TrainMode::joint;
  model.baseline_param = cfg.baseline_param;
  model.config = cfg;
  model.objective_trace =
      detail::run_alternating(L, Ms, cb, cfg, !cfg.freeze_transform, true, progress);

  GlobalTransform transform(std::move(L));
  std::vector<LocalMetric> metrics;
  metrics.reserve(num_tasks);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    metrics.emplace_back(std::move(Ms[t]), static_cast<int>(t));
  }
  double trace_sum = 0.0;
  for (const auto& M : metrics) trace_sum += M.matrix.trace();
  if (transform.matrix.squaredNorm() > 0.0 && trace_sum > 0.0) {
    auto balanced =
        rescale_balance(transform, metrics, RegularizationParams(cfg.beta, cfg.gamma));
    transform = std::move(balanced.first);
    metrics = std::move(balanced.second);
  }
  model.transform = std::move(transform);
  model.metrics = std::move(metrics);
  return model;
}

KnnResult knn_classify(const TrainedModel& model, const std::vector<SupervisedTask>& tasks,
                       Index task, const Eigen::MatrixXd& queries,
                       const std::vector<int>& query_labels, int k, KnnPool pool) {
  if (task < 0 || task >= model.num_views()) throw ShapeError("knn_classify: task out of range");
  if (queries.rows() < 1) throw DataError("knn_classify: no queries");
  if (static_cast<Index>(query_labels.size()) != queries.rows()) {
    throw ShapeError("knn_classify: query label count");
  }
  Eigen::MatrixXd pool_features;
  std::vector<int> pool_labels;
  if (pool == KnnPool::task_specific) {
    pool_features = tasks[task].features;
    pool_labels = tasks[task].labels;
  } else {
    Index rows = 0;
    for (const auto& t : tasks) rows += t.num_objects();
    pool_features.resize(rows, tasks.front().features.cols());
    Index at = 0;
    for (const auto& t : tasks) {
      pool_features.middleRows(at, t.num_objects()) = t.features;
      pool_labels.insert(pool_labels.end(), t.labels.begin(), t.labels.end());
      at += t.num_objects();
    }
  }
  if (pool_features.rows() < 1) throw DataError("knn_classify: empty pool");

  const Eigen::MatrixXd& M = model.metrics[task].matrix;
  const Eigen::MatrixXd zp = pool_features * model.transform.matrix;
  const Eigen::MatrixXd zq = queries * model.transform.matrix;
  const Eigen::VectorXd pool_sq = ((zp * M).array() * zp.array()).rowwise().sum();

  KnnResult result;
  result.predicted.resize(queries.rows());
  Index wrong = 0;
  for (Index q = 0; q < queries.rows(); ++q) {
    const Eigen::VectorXd cross = zp * (M * zq.row(q).transpose());
    const double q_sq = zq.row(q) * M * zq.row(q).transpose();
    Eigen::VectorXd dist = (pool_sq.array() + q_sq - 2.0 * cross.array()).cwiseMax(0.0);
    result.predicted[q] = knn_vote(dist, pool_labels, k);
    if (result.predicted[q] != query_labels[q]) ++wrong;
  }
  result.error = static_cast<double>(wrong) / static_cast<double>(queries.rows());
  return result;
}

PcaModel pca_fit(const Eigen::MatrixXd& X, Index out_dim) {
  const Index n = X.rows();
  const Index h = X.cols();
  if (n < 2) throw DataError("pca_fit: need at least 2 samples");
  if (out_dim < 1 || out_dim > h) throw ConfigError("pca_fit: out_dim outside [1, H]");
  PcaModel pca;
  pca.mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - pca.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
  pca.components.resize(h, out_dim);
  pca.eigenvalues.resize(out_dim);
  for (Index c = 0; c < out_dim; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(h - 1 - c);
    // Canonical sign: largest-magnitude coefficient positive.
    Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    pca.components.col(c) = v;
    pca.eigenvalues[c] = std::max(0.0, es.eigenvalues()[h - 1 - c]);
  }
  return pca;
}

Eigen::MatrixXd pca_transform(const PcaModel& pca, const Eigen::MatrixXd& X) {
  if (X.cols() != pca.components.rows()) throw ShapeError("pca_transform: dimension mismatch");
  return (X.rowwise() - pca.mean.transpose()) * pca.components;
}

}  // namespace mvml
