#include "mvml/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mvml/parallel.hpp"
#include "mvml/rng.hpp"

namespace mvml {

namespace {

constexpr double kTieEps = 1e-12;

Index object_count(const TrainedModel& model, const Eigen::MatrixXd* X) {
  return X ? X->rows() : model.transform.input_dim();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["per_view_triplet_error"] = per_view_triplet_error;
  j["mean_triplet_error"] = mean_triplet_error;
  if (!per_view_knn_error.empty()) {
    j["per_view_knn_error"] = per_view_knn_error;
    j["mean_knn_error"] = mean_knn_error.value_or(0.0);
  }
  if (consistency.size() > 0) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < consistency.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < consistency.cols(); ++c) row.push_back(consistency(r, c));
      rows.push_back(row);
    }
    j["consistency_matrix"] = rows;
  }
  if (gain_joint) j["gain_joint"] = *gain_joint;
  if (gain_pooled) j["gain_pooled"] = *gain_pooled;
  return j;
}

Eigen::MatrixXd pairwise_squared_distances(const TrainedModel& model, Index view,
                                           const Eigen::MatrixXd* X, int threads) {
  if (view < 0 || view >= model.num_views()) throw ShapeError("view out of range");
  const Index n = object_count(model, X);
  const Eigen::MatrixXd& M = model.metrics[view].matrix;
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  if (X == nullptr && model.identity_transform) {
    parallel_for(0, n, threads, [&](std::ptrdiff_t i) {
      for (Index j = 0; j < i; ++j) {
        const double d = detail::clamp_distance(M(i, i) + M(j, j) - 2.0 * M(i, j));
        dist(i, j) = d;
        dist(j, i) = d;
      }
    });
    return dist;
  }
  // Embed once, then distances come from the Gram matrix of Z M Z^T.
  const Eigen::MatrixXd Z = X ? Eigen::MatrixXd(*X * model.transform.matrix)
                              : model.transform.matrix;
  const Eigen::MatrixXd G = Z * M * Z.transpose();
  parallel_for(0, n, threads, [&](std::ptrdiff_t i) {
    for (Index j = 0; j < i; ++j) {
      const double d = detail::clamp_distance(G(i, i) + G(j, j) - 2.0 * G(i, j));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  });
  return dist;
}

std::vector<double> triplet_error(const TrainedModel& model,
                                  const std::vector<std::vector<TripletTerm>>& test,
                                  const Eigen::MatrixXd* X, int threads) {
  if (static_cast<Index>(test.size()) != model.num_views()) {
    throw ShapeError("triplet_error: test view count != model views");
  }
  const Index n = object_count(model, X);
  std::vector<double> errors(test.size(), 0.0);
  for (std::size_t t = 0; t < test.size(); ++t) {
    if (test[t].empty()) throw DataError("triplet_error: empty test view " + std::to_string(t));
    detail::check_indices(test[t], n);
    const Eigen::MatrixXd dist = pairwise_squared_distances(model, t, X, threads);
    Index wrong = 0;
    for (const auto& tr : test[t]) {
      // Ties count as errors: a degenerate metric must not score 50%.
      if (dist(tr.i, tr.j) >= dist(tr.i, tr.k)) ++wrong;
    }
    errors[t] = static_cast<double>(wrong) / static_cast<double>(test[t].size());
  }
  return errors;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / values.size();
}

int knn_vote(const Eigen::VectorXd& dist_to_pool, const std::vector<int>& pool_labels, int k,
             Index exclude) {
  const Index n = dist_to_pool.size();
  if (static_cast<Index>(pool_labels.size()) != n) throw ShapeError("knn_vote: label count");
  std::vector<Index> order;
  order.reserve(n);
  for (Index p = 0; p < n; ++p) {
    if (p != exclude) order.push_back(p);
  }
  if (order.empty()) throw DataError("knn_vote: empty pool");
  const auto kk = std::min<std::size_t>(k, order.size());
  std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](Index a, Index b) {
    if (dist_to_pool[a] != dist_to_pool[b]) return dist_to_pool[a] < dist_to_pool[b];
    return a < b;
  });
  std::map<int, std::pair<Index, double>> votes;  // label -> (count, summed distance)
  for (std::size_t r = 0; r < kk; ++r) {
    auto& v = votes[pool_labels[order[r]]];
    v.first += 1;
    v.second += dist_to_pool[order[r]];
  }
  int best_label = 0;
  Index best_count = -1;
  double best_sum = std::numeric_limits<double>::infinity();
  for (const auto& [label, v] : votes) {
    const bool better = v.first > best_count ||
                        (v.first == best_count && v.second < best_sum) ||
                        (v.first == best_count && v.second == best_sum && label < best_label);
    if (better) {
      best_label = label;
      best_count = v.first;
      best_sum = v.second;
    }
  }
  return best_label;
}

std::vector<double> loo_knn_error(const TrainedModel& model, const std::vector<int>& labels,
                                  int k, const Eigen::MatrixXd* X, int threads) {
  const Index n = object_count(model, X);
  if (labels.empty()) throw DataError("loo_knn_error: labels missing");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("loo_knn_error: label count");
  if (n <= k) throw DataError("loo_knn_error: need more objects than k");
  std::vector<double> errors(model.num_views(), 0.0);
  for (Index t = 0; t < model.num_views(); ++t) {
    const Eigen::MatrixXd dist = pairwise_squared_distances(model, t, X, threads);
    std::atomic_long wrong{0};
    parallel_for(0, n, threads, [&](std::ptrdiff_t i) {
      const int predicted = knn_vote(dist.row(i).transpose(), labels, k, i);
      if (predicted != labels[i]) wrong.fetch_add(1, std::memory_order_relaxed);
    });
    errors[t] = static_cast<double>(wrong.load()) / static_cast<double>(n);
  }
  return errors;
}

namespace {

struct ConsistencyTally {
  long long agree = 0;
  long long valid = 0;

  void probe(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Index i, Index j, Index k) {
    const double da = a(i, j) - a(i, k);
    const double db = b(i, j) - b(i, k);
    if (std::abs(da) < kTieEps || std::abs(db) < kTieEps) return;  // skip ties
    ++valid;
    if ((da < 0) == (db < 0)) ++agree;
  }
};

}  // namespace

double triplet_consistency(const Eigen::MatrixXd& dist_a, const Eigen::MatrixXd& dist_b,
                           std::uint64_t seed, Index sample_probes) {
  if (dist_a.rows() != dist_a.cols() || dist_b.rows() != dist_b.cols() ||
      dist_a.rows() != dist_b.rows()) {
    throw ShapeError("triplet_consistency: oracle shapes differ");
  }
  const Index n = dist_a.rows();
  if (n < 3) throw DataError("triplet_consistency: need at least 3 objects");
  ConsistencyTally tally;
  if (n <= 50) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        for (Index k = j + 1; k < n; ++k) {
          if (k == i) continue;
          tally.probe(dist_a, dist_b, i, j, k);
        }
      }
    }
  } else {
    Rng rng(seed);
    for (Index p = 0; p < sample_probes; ++p) {
      const Index i = static_cast<Index>(rng.uniform_int(n));
      const Index j = static_cast<Index>(rng.uniform_int(n));
      const Index k = static_cast<Index>(rng.uniform_int(n));
      if (i == j || i == k || j == k) continue;
      tally.probe(dist_a, dist_b, i, j, k);
    }
  }
  if (tally.valid == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tally.agree) / static_cast<double>(tally.valid);
}

Eigen::MatrixXd consistency_matrix(const std::vector<Eigen::MatrixXd>& dists,
                                   std::uint64_t seed, Index sample_probes) {
  const auto t = static_cast<Index>(dists.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(t, t);
  for (Index a = 0; a < t; ++a) {
    for (Index b = a + 1; b < t; ++b) {
      // One shared probe seed keeps the matrix exactly symmetric.
      const double v = triplet_consistency(dists[a], dists[b], seed, sample_probes);
      c(a, b) = v;
      c(b, a) = v;
    }
  }
  return c;
}

double performance_gain(const std::vector<double>& budgets,
                        const std::vector<double>& method_errors,
                        const std::vector<double>& independent_errors) {
  if (budgets.size() != method_errors.size() || budgets.size() != independent_errors.size()) {
    throw ConfigError("performance_gain: budget grid mismatch");
  }
  if (budgets.size() < 2) throw ConfigError("performance_gain: need at least 2 budgets");
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (!(budgets[i] > budgets[i - 1])) {
      throw ConfigError("performance_gain: budgets must be strictly increasing");
    }
  }
  auto auc = [&](const std::vector<double>& e) {
    double area = 0.0;
    for (std::size_t i = 1; i < budgets.size(); ++i) {
      area += 0.5 * (budgets[i] - budgets[i - 1]) * (e[i] + e[i - 1]);
    }
    return area;
  };
  const double a_ind = auc(independent_errors);
  const double a_method = auc(method_errors);
  if (a_ind == 0.0) {
    if (a_method == 0.0) return 0.0;
    throw NumericError("performance_gain: independent AUC is zero");
  }
  return (a_ind - a_method) / a_ind;
}

}  // namespace mvml
