/// @file  supervised.hpp
/// @brief Metric learning from features and class labels: class-derived
///        triplets plus a target-neighbor pull term, trained under the same
///        shared-transform parametrization. Includes the k-NN classifier
///        and a PCA preprocessing utility.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mvml/solver.hpp"

namespace mvml {

/// One classification task: features, labels, and each object's
/// precomputed same-class target neighbors.
struct SupervisedTask {
  Eigen::MatrixXd features;                         // N_t x H
  std::vector<int> labels;                          // N_t
  std::vector<std::vector<Index>> target_neighbors; // N_t lists of kappa indices

  Index num_objects() const { return features.rows(); }
  void validate() const;
};

/// kappa nearest same-class neighbors per object under plain Euclidean
/// distance in the input features, computed once before training. Every
/// class must have more than kappa members.
std::vector<std::vector<Index>> build_target_neighbors(const Eigen::MatrixXd& features,
                                                       const std::vector<int>& labels,
                                                       int kappa);

/// The impostor pattern: one triplet (i, j, k) per object i, target
/// neighbor j, and differently-labeled object k. `cap` > 0 subsamples that
/// cross product uniformly (seeded) without materializing it.
std::vector<TripletTerm> class_triplets(const std::vector<int>& labels,
                                        const std::vector<std::vector<Index>>& target_neighbors,
                                        int view = 0, Index cap = 0, std::uint64_t seed = 0);

/// Trains the shared transform and per-task metrics on the class-derived
/// triplets plus mu times the summed squared distances to target neighbors.
/// Tasks may have disjoint object sets; they share the feature space.
TrainedModel train_supervised(const std::vector<SupervisedTask>& tasks,
                              const SolverConfig& cfg, double mu,
                              Index triplet_cap = 0, std::ostream* progress = nullptr);

enum class KnnPool { task_specific, all_tasks };

struct KnnResult {
  std::vector<int> predicted;
  double error = 0.0;
};

/// Classifies queries with a k-NN vote under task `task`'s metric over
/// either that task's training pool or all tasks pooled.
KnnResult knn_classify(const TrainedModel& model, const std::vector<SupervisedTask>& tasks,
                       Index task, const Eigen::MatrixXd& queries,
                       const std::vector<int>& query_labels, int k, KnnPool pool);

struct PcaModel {
  Eigen::VectorXd mean;         // H
  Eigen::MatrixXd components;   // H x K, orthonormal columns
  Eigen::VectorXd eigenvalues;  // K, descending
};

/// Covariance eigendecomposition keeping the leading out_dim components.
PcaModel pca_fit(const Eigen::MatrixXd& X, Index out_dim);
Eigen::MatrixXd pca_transform(const PcaModel& pca, const Eigen::MatrixXd& X);

}  // namespace mvml
