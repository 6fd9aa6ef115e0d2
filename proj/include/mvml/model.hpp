/// @file  model.hpp
/// @brief Core parameter types of the product metric family K_t = L M_t L^T:
///        the shared transform L, per-view PSD metrics M_t, the induced
///        squared distances, PSD-cone projection, and the closed-form
///        regularizer machinery (optimal decomposition and rescaling).

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "mvml/common.hpp"

namespace mvml {

using Eigen::Index;

/// Shared H x D transform mapping all objects into a common D-dimensional
/// space. When the data has no features (H = N), rows are the object
/// embeddings themselves.
struct GlobalTransform {
  Eigen::MatrixXd matrix;

  GlobalTransform() = default;
  /// Validates: finite entries, 1 <= D <= H.
  explicit GlobalTransform(Eigen::MatrixXd m);

  Index input_dim() const { return matrix.rows(); }
  Index embed_dim() const { return matrix.cols(); }

  static GlobalTransform identity(Index h);
};

/// View-specific D x D metric, kept symmetric PSD (validated within
/// kSymTol / kPsdTol at construction).
struct LocalMetric {
  Eigen::MatrixXd matrix;
  int view = -1;

  LocalMetric() = default;
  explicit LocalMetric(Eigen::MatrixXd m, int view = -1);

  Index dim() const { return matrix.rows(); }
};

/// Penalty weights beta (on ||L||_F^2) and gamma (on sum_t tr(M_t)).
/// Only the product beta*gamma matters for the attainable minimum; both
/// must be strictly positive.
struct RegularizationParams {
  double beta = 1.0;
  double gamma = 1.0;

  RegularizationParams() = default;
  RegularizationParams(double beta, double gamma);
};

/// The induced H x H view kernel L M L^T (derived, never primary state).
Eigen::MatrixXd view_kernel(const GlobalTransform& L, const LocalMetric& M);

/// Squared distance (x_i - x_j)^T L M L^T (x_i - x_j).
/// Results in [-kPsdTol, 0) clamp to zero; anything more negative throws
/// NumericError (the metric was not PSD within tolerance).
double squared_distance(const GlobalTransform& L, const LocalMetric& M,
                        const Eigen::VectorXd& xi, const Eigen::VectorXd& xj);

/// Featureless form: x_i is the i-th coordinate vector, so L^T(x_i - x_j)
/// is the difference of rows i and j of L.
double squared_distance_rows(const GlobalTransform& L, const LocalMetric& M,
                             Index i, Index j);

/// Frobenius-nearest PSD matrix to (A + A^T)/2: eigendecompose, clamp
/// negative eigenvalues to zero, reconstruct, re-symmetrize. Inputs whose
/// spectrum is already nonnegative (up to reconstruction round-off) are
/// returned unchanged, which makes the projection bit-exactly idempotent.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& A);

/// gamma * sum_t tr(M_t) + beta * ||L||_F^2.
double regularizer_value(const GlobalTransform& L,
                         const std::vector<LocalMetric>& Ms,
                         const RegularizationParams& p);

/// Rescales (L, {M_t}) -> (alpha L, {M_t / alpha^2}) with
/// alpha = (gamma sum_t tr(M_t) / (beta ||L||_F^2))^{1/4}. Leaves every
/// kernel L M_t L^T unchanged and never increases regularizer_value.
/// Throws NumericError when ||L||_F = 0 or all metrics are zero.
std::pair<GlobalTransform, std::vector<LocalMetric>> rescale_balance(
    const GlobalTransform& L, const std::vector<LocalMetric>& Ms,
    const RegularizationParams& p);

/// The attainable minimum of regularizer_value over all decompositions
/// L M_t L^T = K_t: 2 sqrt(beta gamma) tr((sum_t K_t)^{1/2}).
double effective_regularizer(const std::vector<Eigen::MatrixXd>& Ks,
                             const RegularizationParams& p);

/// Constructs a decomposition achieving effective_regularizer exactly.
/// Eigenvalues of sum_t K_t below 1e-12 * lambda_max are dropped; the
/// construction is restricted to the retained eigenbasis and zero-padded
/// to width D. Throws ConfigError when D < rank(sum_t K_t).
std::pair<GlobalTransform, std::vector<LocalMetric>> prop1_construct(
    const std::vector<Eigen::MatrixXd>& Ks, const RegularizationParams& p,
    Index embed_dim);

namespace detail {

/// Unvalidated kernels shared with the loss/gradient code paths.
double squared_distance_raw(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                            const Eigen::VectorXd& diff);
double clamp_distance(double d);

}  // namespace detail

}  // namespace mvml
