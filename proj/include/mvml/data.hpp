/// @file  data.hpp
/// @brief Triplet datasets, ground-truth view oracles, triplet sampling,
///        partition broadcast, and train/test splitting.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "mvml/loss.hpp"

namespace mvml {

/// Per-view triplet constraint sets over N objects, with optional features
/// and class labels.
struct TripletDataset {
  Index num_objects = 0;
  std::vector<std::vector<TripletTerm>> views;
  std::optional<Eigen::MatrixXd> features;  // N x H
  std::vector<int> labels;                  // empty when absent

  Index num_views() const { return static_cast<Index>(views.size()); }
  /// H: feature dimension, or N when the data is featureless.
  Index input_dim() const { return features ? features->cols() : num_objects; }
  Index total_triplets() const;
  const Eigen::MatrixXd* feature_ptr() const { return features ? &*features : nullptr; }

  /// Checks index ranges, distinctness, feature/label sizes.
  void validate() const;
};

/// Per-view ground-truth distance oracles: dense N x N symmetric
/// nonnegative matrices with zero diagonal.
struct GroundTruthViews {
  std::vector<Eigen::MatrixXd> dist;

  Index num_views() const { return static_cast<Index>(dist.size()); }
  Index num_objects() const { return dist.empty() ? 0 : dist.front().rows(); }
  void validate() const;
};

/// Draws `count` distinct triplets uniformly over index triples, oriented
/// so dist(i,j) < dist(i,k) under the oracle. Near-ties
/// (|d_ij - d_ik| < 1e-12) are resampled. Throws when the oracle cannot
/// supply `count` distinct oriented triplets.
std::vector<TripletTerm> sample_triplets(const Eigen::MatrixXd& dist, int view,
                                         Index count, std::uint64_t seed);

/// Broadcasts one similar/dissimilar partition around a target into the
/// full cross product of triplets {(target, j, l) : j similar, l dissimilar}.
std::vector<TripletTerm> partition_to_triplets(Index target,
                                               const std::vector<Index>& similar,
                                               const std::vector<Index>& dissimilar,
                                               int view = 0);

struct TrainTestSplit {
  std::vector<std::vector<TripletTerm>> train;
  std::vector<std::vector<TripletTerm>> test;
};

/// Per-view disjoint random split; test size is floor(fraction * n).
/// With equalize_train, every view's train list is truncated to the
/// smallest view's train count.
TrainTestSplit split_train_test(const std::vector<std::vector<TripletTerm>>& views,
                                double test_fraction, std::uint64_t seed,
                                bool equalize_train = false);

}  // namespace mvml
