/// @file  io.hpp
/// @brief Text file formats: matrices, triplets, features, labels.
///
/// Matrix files: first line `rows cols`, then row-major whitespace-separated
/// values written with 17 significant digits (round-trip exact for double).
/// Triplet files: TSV `view i j k` per line, 0-based, `#` comment lines.
/// Feature files: TSV, first line `N H`, then one row per object.
/// Label files: TSV `index label`, every index in [0, N) exactly once.

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "mvml/loss.hpp"

namespace mvml {

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

/// Writes all views' triplets, one `view i j k` line each.
void save_triplets(const std::filesystem::path& path,
                   const std::vector<std::vector<TripletTerm>>& views);

/// Loads per-view triplet lists. View ids become vector positions (holes
/// stay empty). When expected_objects > 0, indices are range-checked
/// against it. Malformed lines report their line number.
std::vector<std::vector<TripletTerm>> load_triplets(const std::filesystem::path& path,
                                                    Index expected_objects = 0);

void save_features(const std::filesystem::path& path, const Eigen::MatrixXd& X);
Eigen::MatrixXd load_features(const std::filesystem::path& path);

void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> load_labels(const std::filesystem::path& path);

}  // namespace mvml
