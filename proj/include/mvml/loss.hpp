/// @file  loss.hpp
/// @brief Triplet hinge loss and its exact subgradients in L and M_t.
///
/// A triplet (i, j, k) demands d(i,j) < d(i,k) under the view metric; the
/// hinge max(1 + d_ij - d_ik, 0) is the only loss implemented. The loss
/// kernels accept an optional feature matrix; without one, objects are
/// coordinate vectors and L's rows act as the embeddings directly (the
/// implicit identity feature matrix is never materialized).

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvml/model.hpp"

namespace mvml {

/// One ordinal constraint: object i is more similar to j than to k.
struct TripletTerm {
  Index i = 0;
  Index j = 0;
  Index k = 0;
  int view = 0;

  TripletTerm() = default;
  TripletTerm(Index i, Index j, Index k, int view = 0) : i(i), j(j), k(k), view(view) {}

  friend bool operator==(const TripletTerm&, const TripletTerm&) = default;
};

inline double hinge(double d_ij, double d_ik) {
  const double z = 1.0 + d_ij - d_ik;
  return z > 0.0 ? z : 0.0;
}

/// Hinge of the two squared distances of one triplet. X == nullptr means
/// featureless data (rows of L are the embeddings).
double triplet_loss(const GlobalTransform& L, const LocalMetric& M,
                    const TripletTerm& t, const Eigen::MatrixXd* X);

/// Full subgradient of the joint objective w.r.t. L: active triplets
/// contribute 2 (d_ij d_ij^T - d_ik d_ik^T) L M_t, plus the ridge 2 beta L.
/// Triplets are grouped per view, aligned with `Ms`. Inactive triplets
/// (hinge argument <= 0) contribute nothing.
Eigen::MatrixXd grad_L(const GlobalTransform& L, const std::vector<LocalMetric>& Ms,
                       const std::vector<std::vector<TripletTerm>>& triplets_by_view,
                       const Eigen::MatrixXd* X, double beta);

/// Subgradient of view t's loss term w.r.t. M_t: active triplets contribute
/// u_ij u_ij^T - u_ik u_ik^T with u = L^T(x_i - x_j), plus the trace-penalty
/// gradient gamma I. Output is symmetric by construction.
Eigen::MatrixXd grad_M(const GlobalTransform& L, const LocalMetric& M,
                       const std::vector<TripletTerm>& triplets,
                       const Eigen::MatrixXd* X, double gamma);

namespace detail {

/// L^T (x_i - x_j); featureless when X == nullptr.
Eigen::VectorXd transformed_diff(const Eigen::MatrixXd& L, const Eigen::MatrixXd* X,
                                 Index i, Index j);

/// Adds the active-triplet loss gradients for one view into G (same shape
/// as L) and returns the summed hinge loss over [first, last).
double accumulate_grad_L(Eigen::MatrixXd& G, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& M, const TripletTerm* first,
                         const TripletTerm* last, const Eigen::MatrixXd* X);

/// Same for the metric side; Gm accumulates D x D contributions.
double accumulate_grad_M(Eigen::MatrixXd& Gm, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& M, const TripletTerm* first,
                         const TripletTerm* last, const Eigen::MatrixXd* X);

/// Summed hinge loss of one view's triplets.
double view_loss(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                 const std::vector<TripletTerm>& triplets, const Eigen::MatrixXd* X);

/// Featureless single-metric fast path (transform fixed at identity):
/// distances read metric entries directly and gradients touch only the
/// rows and columns of the objects involved.
double view_loss_identity(const Eigen::MatrixXd& M, const std::vector<TripletTerm>& triplets);
double accumulate_grad_M_identity(Eigen::MatrixXd& Gm, const Eigen::MatrixXd& M,
                                  const TripletTerm* first, const TripletTerm* last);

void check_indices(const std::vector<TripletTerm>& triplets, Index n);

}  // namespace detail

}  // namespace mvml
