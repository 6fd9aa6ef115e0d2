/// @file  procrustes.hpp
/// @brief Landmark-based pose similarity: least-squares alignment of one
///        landmark configuration to another under scaling and translation,
///        and view oracles built from landmark subsets.

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "mvml/data.hpp"

namespace mvml {

/// Per-object 2-D landmark configurations; every object carries the same
/// number of landmarks P. Views are defined by subsets of {0..P-1}.
struct LandmarkSet {
  std::vector<Eigen::MatrixXd> objects;  // each P x 2

  Index num_objects() const { return static_cast<Index>(objects.size()); }
  Index num_landmarks() const { return objects.empty() ? 0 : objects.front().rows(); }
};

struct LandmarkView {
  std::string name;
  std::vector<Index> landmarks;  // 0-based indices into {0..P-1}
};

/// min over scale s >= 0 and translation v of sum_p ||s b_p + v - a_p||^2.
/// Rotation is deliberately outside the alignment group. Throws DataError
/// when b is degenerate (all points identical).
double procrustes_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Symmetric distance oracle over a landmark subset. Entry (i, j) is the
/// alignment residual of object j against anchor i divided by the anchor's
/// centered squared norm; the normalization makes the matrix symmetric
/// while preserving every anchored comparison d(i,j) vs d(i,k).
Eigen::MatrixXd landmark_distance_matrix(const LandmarkSet& set,
                                         const std::vector<Index>& landmarks,
                                         int threads = 1);

/// The five default view subsets (0-based): all 16 landmarks; back; nose;
/// back+wings; nose+wings.
std::vector<LandmarkView> default_landmark_views();

/// TSV `object landmark x y`; every object must carry the same landmarks.
LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const std::filesystem::path& path, const LandmarkSet& set);

/// JSON config `{"views": [{"name": ..., "landmarks": [...]}, ...]}`.
std::vector<LandmarkView> load_landmark_views(const std::filesystem::path& path);
void save_landmark_views(const std::filesystem::path& path,
                         const std::vector<LandmarkView>& views);

}  // namespace mvml
