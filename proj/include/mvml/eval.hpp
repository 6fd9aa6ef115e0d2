/// @file  eval.hpp
/// @brief Triplet generalization error, leave-one-out k-NN error,
///        between-view triplet consistency, and the area-under-curve
///        performance gain statistic.

#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "mvml/solver.hpp"

namespace mvml {

struct EvalReport {
  std::vector<double> per_view_triplet_error;
  double mean_triplet_error = 0.0;
  std::vector<double> per_view_knn_error;  // empty when labels absent
  std::optional<double> mean_knn_error;
  Eigen::MatrixXd consistency;             // T x T, size 0 when not computed
  std::optional<double> gain_joint;
  std::optional<double> gain_pooled;

  nlohmann::json to_json() const;
};

/// N x N matrix of squared distances between all objects under one view's
/// learned metric (rows filled in parallel; output independent of threads).
Eigen::MatrixXd pairwise_squared_distances(const TrainedModel& model, Index view,
                                           const Eigen::MatrixXd* X, int threads = 1);

/// Fraction of test triplets per view whose orientation the model gets
/// wrong; ties count as errors. Each evaluated view must be nonempty.
std::vector<double> triplet_error(const TrainedModel& model,
                                  const std::vector<std::vector<TripletTerm>>& test,
                                  const Eigen::MatrixXd* X, int threads = 1);

double mean(const std::vector<double>& values);

/// Leave-one-out k-NN classification error per view. Votes are over the k
/// nearest other objects (ties at the boundary go to the lower index);
/// vote ties break by smaller summed distance, then lower label id.
std::vector<double> loo_knn_error(const TrainedModel& model, const std::vector<int>& labels,
                                  int k, const Eigen::MatrixXd* X, int threads = 1);

/// k-NN vote over explicit distance rows; exposed for reuse by the
/// supervised module's classifier. dist_to_pool[p] is the squared distance
/// from the query to pool object p.
int knn_vote(const Eigen::VectorXd& dist_to_pool, const std::vector<int>& pool_labels, int k,
             Index exclude = -1);

/// Fraction of probe triplets (i, j, k) on which two distance oracles agree
/// on the orientation; probes tied in either oracle are skipped. Exhaustive
/// enumeration for N <= 50, otherwise `sample_probes` seeded draws.
/// Returns NaN when every probe is tied.
double triplet_consistency(const Eigen::MatrixXd& dist_a, const Eigen::MatrixXd& dist_b,
                           std::uint64_t seed = 0, Index sample_probes = 100000);

/// Symmetric T x T consistency matrix with unit diagonal; all pairs share
/// one probe set, so consistency(a,b) == consistency(b,a) exactly.
Eigen::MatrixXd consistency_matrix(const std::vector<Eigen::MatrixXd>& dists,
                                   std::uint64_t seed = 0, Index sample_probes = 100000);

/// (AUC_independent - AUC_method) / AUC_independent with trapezoidal AUC
/// over the raw budget axis. Budgets must be strictly increasing and shared
/// by both curves.
double performance_gain(const std::vector<double>& budgets,
                        const std::vector<double>& method_errors,
                        const std::vector<double>& independent_errors);

}  // namespace mvml
