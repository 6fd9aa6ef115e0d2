#include "mvml/loss.hpp"

#include <string>

namespace mvml {
namespace detail {

void check_indices(const std::vector<TripletTerm>& triplets, Index n) {
  for (const auto& t : triplets) {
    if (t.i < 0 || t.j < 0 || t.k < 0 || t.i >= n || t.j >= n || t.k >= n) {
      throw DataError("triplet index out of range [0, " + std::to_string(n) + ")");
    }
  }
}

Eigen::VectorXd transformed_diff(const Eigen::MatrixXd& L, const Eigen::MatrixXd* X,
                                 Index i, Index j) {
  if (X == nullptr) return (L.row(i) - L.row(j)).transpose();
  return L.transpose() * (X->row(i) - X->row(j)).transpose();
}

namespace {

struct TripletState {
  Eigen::VectorXd u_ij, u_ik;
  double d_ij = 0.0, d_ik = 0.0;
  bool active = false;  // hinge argument strictly positive
  double loss = 0.0;
};

TripletState eval_triplet(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                          const TripletTerm& t, const Eigen::MatrixXd* X) {
  TripletState s;
  s.u_ij = transformed_diff(L, X, t.i, t.j);
  s.u_ik = transformed_diff(L, X, t.i, t.k);
  s.d_ij = clamp_distance(s.u_ij.dot(M * s.u_ij));
  s.d_ik = clamp_distance(s.u_ik.dot(M * s.u_ik));
  const double z = 1.0 + s.d_ij - s.d_ik;
  // Subgradient choice at the kink (z == 0): the flat side.
  s.active = z > 0.0;
  s.loss = s.active ? z : 0.0;
  return s;
}

}  // namespace

double view_loss(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                 const std::vector<TripletTerm>& triplets, const Eigen::MatrixXd* X) {
  double total = 0.0;
  for (const auto& t : triplets) total += eval_triplet(L, M, t, X).loss;
  return total;
}

double accumulate_grad_L(Eigen::MatrixXd& G, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& M, const TripletTerm* first,
                         const TripletTerm* last, const Eigen::MatrixXd* X) {
  double total = 0.0;
  for (const TripletTerm* it = first; it != last; ++it) {
    const TripletTerm& t = *it;
    const TripletState s = eval_triplet(L, M, t, X);
    total += s.loss;
    if (!s.active) continue;
    const Eigen::VectorXd w_ij = 2.0 * (M * s.u_ij);
    const Eigen::VectorXd w_ik = 2.0 * (M * s.u_ik);
    if (X == nullptr) {
      G.row(t.i) += (w_ij - w_ik).transpose();
      G.row(t.j) -= w_ij.transpose();
      G.row(t.k) += w_ik.transpose();
    } else {
      const Eigen::VectorXd dij = (X->row(t.i) - X->row(t.j)).transpose();
      const Eigen::VectorXd dik = (X->row(t.i) - X->row(t.k)).transpose();
      G.noalias() += dij * w_ij.transpose();
      G.noalias() -= dik * w_ik.transpose();
    }
  }
  return total;
}

double accumulate_grad_M(Eigen::MatrixXd& Gm, const Eigen::MatrixXd& L,
                         const Eigen::MatrixXd& M, const TripletTerm* first,
                         const TripletTerm* last, const Eigen::MatrixXd* X) {
  double total = 0.0;
  for (const TripletTerm* it = first; it != last; ++it) {
    const TripletTerm& t = *it;
    const TripletState s = eval_triplet(L, M, t, X);
    total += s.loss;
    if (!s.active) continue;
    Gm.noalias() += s.u_ij * s.u_ij.transpose();
    Gm.noalias() -= s.u_ik * s.u_ik.transpose();
  }
  return total;
}

double view_loss_identity(const Eigen::MatrixXd& M, const std::vector<TripletTerm>& triplets) {
  double total = 0.0;
  for (const auto& t : triplets) {
    const double d_ij = clamp_distance(M(t.i, t.i) + M(t.j, t.j) - 2.0 * M(t.i, t.j));
    const double d_ik = clamp_distance(M(t.i, t.i) + M(t.k, t.k) - 2.0 * M(t.i, t.k));
    total += hinge(d_ij, d_ik);
  }
  return total;
}

double accumulate_grad_M_identity(Eigen::MatrixXd& Gm, const Eigen::MatrixXd& M,
                                  const TripletTerm* first, const TripletTerm* last) {
  double total = 0.0;
  for (const TripletTerm* it = first; it != last; ++it) {
    const TripletTerm& t = *it;
    const double d_ij = clamp_distance(M(t.i, t.i) + M(t.j, t.j) - 2.0 * M(t.i, t.j));
    const double d_ik = clamp_distance(M(t.i, t.i) + M(t.k, t.k) - 2.0 * M(t.i, t.k));
    const double z = 1.0 + d_ij - d_ik;
    if (z <= 0.0) continue;
    total += z;
    // (e_i - e_j)(e_i - e_j)^T - (e_i - e_k)(e_i - e_k)^T expands into
    // eight scattered entries; the (i, i) terms cancel.
    Gm(t.j, t.j) += 1.0;
    Gm(t.i, t.j) -= 1.0;
    Gm(t.j, t.i) -= 1.0;
    Gm(t.k, t.k) -= 1.0;
    Gm(t.i, t.k) += 1.0;
    Gm(t.k, t.i) += 1.0;
  }
  return total;
}

}  // namespace detail

namespace {

Index object_count(const GlobalTransform& L, const Eigen::MatrixXd* X) {
  if (X == nullptr) return L.input_dim();
  if (X->cols() != L.input_dim()) {
    throw ShapeError("feature matrix has " + std::to_string(X->cols()) +
                     " columns but L expects " + std::to_string(L.input_dim()));
  }
  return X->rows();
}

}  // namespace

double triplet_loss(const GlobalTransform& L, const LocalMetric& M,
                    const TripletTerm& t, const Eigen::MatrixXd* X) {
  if (L.embed_dim() != M.dim()) throw ShapeError("triplet_loss: L cols != M dim");
  detail::check_indices({t}, object_count(L, X));
  const Eigen::VectorXd u_ij = detail::transformed_diff(L.matrix, X, t.i, t.j);
  const Eigen::VectorXd u_ik = detail::transformed_diff(L.matrix, X, t.i, t.k);
  const double d_ij = detail::clamp_distance(u_ij.dot(M.matrix * u_ij));
  const double d_ik = detail::clamp_distance(u_ik.dot(M.matrix * u_ik));
  return hinge(d_ij, d_ik);
}

Eigen::MatrixXd grad_L(const GlobalTransform& L, const std::vector<LocalMetric>& Ms,
                       const std::vector<std::vector<TripletTerm>>& triplets_by_view,
                       const Eigen::MatrixXd* X, double beta) {
  if (triplets_by_view.size() != Ms.size()) {
    throw ShapeError("grad_L: view count mismatch between triplets and metrics");
  }
  const Index n = object_count(L, X);
  Eigen::MatrixXd G = 2.0 * beta * L.matrix;
  for (std::size_t t = 0; t < Ms.size(); ++t) {
    if (Ms[t].dim() != L.embed_dim()) throw ShapeError("grad_L: M dim != L cols");
    detail::check_indices(triplets_by_view[t], n);
    const auto& tv = triplets_by_view[t];
    detail::accumulate_grad_L(G, L.matrix, Ms[t].matrix, tv.data(), tv.data() + tv.size(), X);
  }
  return G;
}

Eigen::MatrixXd grad_M(const GlobalTransform& L, const LocalMetric& M,
                       const std::vector<TripletTerm>& triplets,
                       const Eigen::MatrixXd* X, double gamma) {
  if (L.embed_dim() != M.dim()) throw ShapeError("grad_M: L cols != M dim");
  detail::check_indices(triplets, object_count(L, X));
  const Index d = M.dim();
  Eigen::MatrixXd Gm = gamma * Eigen::MatrixXd::Identity(d, d);
  detail::accumulate_grad_M(Gm, L.matrix, M.matrix, triplets.data(),
                            triplets.data() + triplets.size(), X);
  return Gm;
}

}  // namespace mvml
