/// @file  synthetic.hpp
/// @brief Synthetic multi-view benchmark generators. Each view measures
///        Euclidean distance after projecting the points onto a seeded
///        random orthonormal subspace.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mvml/data.hpp"
#include "mvml/rng.hpp"

namespace mvml {

struct SyntheticData {
  Eigen::MatrixXd points;               // N x dim
  std::vector<int> labels;              // cluster ids; empty for uniform data
  std::vector<Eigen::MatrixXd> bases;   // per-view dim x d_v orthonormal
  GroundTruthViews views;
};

/// Points uniform in the [0,1]^dim hypercube; one view per subspace
/// dimension. Defaults follow the benchmark protocol: 200 points in 10
/// dimensions with six views of dims 2..7.
SyntheticData gen_uniform(Index n, Index dim, const std::vector<Index>& subspace_dims,
                          std::uint64_t seed, int threads = 1);

/// Mixture of `clusters` spherical Gaussians with the given variance,
/// centers uniform in a hypercube of the given side length; cluster
/// assignment is balanced round-robin and returned as labels.
SyntheticData gen_clustered(Index n, int clusters, double variance, double box_side,
                            Index dim, const std::vector<Index>& subspace_dims,
                            std::uint64_t seed, int threads = 1);

namespace detail {

/// Orthonormal basis (dim x sub_dim) from the QR of an i.i.d. Gaussian draw.
Eigen::MatrixXd random_subspace_basis(Index dim, Index sub_dim, Rng& rng);

/// Symmetric zero-diagonal matrix of Euclidean distances between projected
/// points (rows filled in parallel, output independent of thread count).
Eigen::MatrixXd projected_distances(const Eigen::MatrixXd& points,
                                    const Eigen::MatrixXd& basis, int threads);

}  // namespace detail

}  // namespace mvml
