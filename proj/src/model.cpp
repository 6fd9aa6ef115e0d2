#include "mvml/model.hpp"

#include <cmath>
#include <string>

namespace mvml {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

GlobalTransform::GlobalTransform(Eigen::MatrixXd m) : matrix(std::move(m)) {
  require_finite(matrix, "GlobalTransform");
  const Index h = matrix.rows();
  const Index d = matrix.cols();
  if (d < 1 || d > h) {
    throw ShapeError("GlobalTransform: embedding dimension " + std::to_string(d) +
                     " outside [1, " + std::to_string(h) + "]");
  }
}

GlobalTransform GlobalTransform::identity(Index h) {
  return GlobalTransform(Eigen::MatrixXd::Identity(h, h));
}

LocalMetric::LocalMetric(Eigen::MatrixXd m, int view) : matrix(std::move(m)), view(view) {
  require_finite(matrix, "LocalMetric");
  if (matrix.rows() != matrix.cols()) throw ShapeError("LocalMetric: matrix not square");
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymTol) {
    throw NumericError("LocalMetric: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  const Eigen::MatrixXd sym = 0.5 * (matrix + matrix.transpose());
  const double lmin = min_eigenvalue(sym);
  if (lmin < -kPsdTol) {
    throw NumericError("LocalMetric: eigenvalue " + std::to_string(lmin) + " below -1e-9");
  }
}

RegularizationParams::RegularizationParams(double beta, double gamma)
    : beta(beta), gamma(gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) {
    throw ConfigError("RegularizationParams: beta and gamma must be > 0");
  }
}

Eigen::MatrixXd view_kernel(const GlobalTransform& L, const LocalMetric& M) {
  if (L.embed_dim() != M.dim()) throw ShapeError("view_kernel: L cols != M dim");
  return L.matrix * M.matrix * L.matrix.transpose();
}

namespace detail {

double clamp_distance(double d) {
  if (d >= 0.0) return d;
  if (d >= -kPsdTol) return 0.0;
  throw NumericError("squared distance " + std::to_string(d) +
                     " below -1e-9; metric not PSD within tolerance");
}

double squared_distance_raw(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                            const Eigen::VectorXd& diff) {
  const Eigen::VectorXd u = L.transpose() * diff;
  return clamp_distance(u.dot(M * u));
}

}  // namespace detail

double squared_distance(const GlobalTransform& L, const LocalMetric& M,
                        const Eigen::VectorXd& xi, const Eigen::VectorXd& xj) {
  if (xi.size() != xj.size() || xi.size() != L.input_dim()) {
    throw ShapeError("squared_distance: vector length does not match input dimension");
  }
  if (L.embed_dim() != M.dim()) throw ShapeError("squared_distance: L cols != M dim");
  return detail::squared_distance_raw(L.matrix, M.matrix, xi - xj);
}

double squared_distance_rows(const GlobalTransform& L, const LocalMetric& M,
                             Index i, Index j) {
  if (i < 0 || j < 0 || i >= L.input_dim() || j >= L.input_dim()) {
    throw ShapeError("squared_distance_rows: index out of range");
  }
  if (L.embed_dim() != M.dim()) throw ShapeError("squared_distance_rows: L cols != M dim");
  const Eigen::VectorXd u = (L.matrix.row(i) - L.matrix.row(j)).transpose();
  return detail::clamp_distance(u.dot(M.matrix * u));
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ShapeError("project_psd: matrix not square");
  require_finite(A, "project_psd");
  Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("project_psd: eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  // Already PSD up to reconstruction round-off: return the symmetrized
  // input so repeated projection is a bit-exact fixed point.
  if (ev.minCoeff() >= -1e-13 * scale) return sym;
  const Eigen::VectorXd clamped = ev.cwiseMax(0.0);
  Eigen::MatrixXd rec = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (rec + rec.transpose());
}

double regularizer_value(const GlobalTransform& L,
                         const std::vector<LocalMetric>& Ms,
                         const RegularizationParams& p) {
  if (!(p.beta > 0.0) || !(p.gamma > 0.0)) {
    throw ConfigError("regularizer_value: beta and gamma must be > 0");
  }
  double trace_sum = 0.0;
  for (const auto& M : Ms) {
    if (M.dim() != L.embed_dim()) throw ShapeError("regularizer_value: M dim != L cols");
    trace_sum += M.matrix.trace();
  }
  return p.gamma * trace_sum + p.beta * L.matrix.squaredNorm();
}

std::pair<GlobalTransform, std::vector<LocalMetric>> rescale_balance(
    const GlobalTransform& L, const std::vector<LocalMetric>& Ms,
    const RegularizationParams& p) {
  double trace_sum = 0.0;
  for (const auto& M : Ms) {
    if (M.dim() != L.embed_dim()) throw ShapeError("rescale_balance: M dim != L cols");
    trace_sum += M.matrix.trace();
  }
  const double fro2 = L.matrix.squaredNorm();
  if (!(fro2 > 0.0)) throw NumericError("rescale_balance: ||L||_F is zero");
  if (!(trace_sum > 0.0)) throw NumericError("rescale_balance: sum of metric traces is zero");
  const double alpha = std::pow(p.gamma * trace_sum / (p.beta * fro2), 0.25);
  GlobalTransform out_L(alpha * L.matrix);
  std::vector<LocalMetric> out_Ms;
  out_Ms.reserve(Ms.size());
  const double inv_a2 = 1.0 / (alpha * alpha);
  for (const auto& M : Ms) out_Ms.emplace_back(inv_a2 * M.matrix, M.view);
  return {std::move(out_L), std::move(out_Ms)};
}

namespace {

/// Validates symmetry/PSD-within-tolerance and returns the eigensystem of
/// the symmetrized matrix.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_psd_eigen(
    const Eigen::MatrixXd& K, const char* what) {
  if (K.rows() != K.cols()) throw ShapeError(std::string(what) + ": kernel not square");
  require_finite(K, what);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (K + K.transpose()));
  if (es.info() != Eigen::Success) {
    throw NumericError(std::string(what) + ": eigendecomposition failed");
  }
  if (es.eigenvalues().minCoeff() < -kPsdTol) {
    throw NumericError(std::string(what) + ": kernel not PSD within tolerance");
  }
  return es;
}

}  // namespace

double effective_regularizer(const std::vector<Eigen::MatrixXd>& Ks,
                             const RegularizationParams& p) {
  if (Ks.empty()) throw ShapeError("effective_regularizer: no kernels");
  const Index h = Ks.front().rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(h, h);
  for (const auto& K : Ks) {
    checked_psd_eigen(K, "effective_regularizer");
    if (K.rows() != h) throw ShapeError("effective_regularizer: kernel sizes differ");
    sum += K;
  }
  auto es = checked_psd_eigen(sum, "effective_regularizer");
  // Eigenvalues within 1e-12 of the largest are rank noise; clamping them
  // before the square root keeps tr(K^{1/2}) stable (sqrt amplifies noise).
  const double cutoff = 1e-12 * std::max(0.0, es.eigenvalues().maxCoeff());
  double tr_sqrt = 0.0;
  for (Index i = 0; i < h; ++i) {
    const double ev = es.eigenvalues()[i];
    if (ev > cutoff) tr_sqrt += std::sqrt(ev);
  }
  return 2.0 * std::sqrt(p.beta * p.gamma) * tr_sqrt;
}

std::pair<GlobalTransform, std::vector<LocalMetric>> prop1_construct(
    const std::vector<Eigen::MatrixXd>& Ks, const RegularizationParams& p,
    Index embed_dim) {
  if (Ks.empty()) throw ShapeError("prop1_construct: no kernels");
  const Index h = Ks.front().rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(h, h);
  for (const auto& K : Ks) {
    checked_psd_eigen(K, "prop1_construct");
    if (K.rows() != h) throw ShapeError("prop1_construct: kernel sizes differ");
    sum += K;
  }
  auto es = checked_psd_eigen(sum, "prop1_construct");
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  const double lmax = std::max(0.0, ev.maxCoeff());
  const double cutoff = 1e-12 * lmax;
  Index rank = 0;
  for (Index i = 0; i < h; ++i) {
    if (ev[i] > cutoff) ++rank;
  }
  if (embed_dim < rank) {
    throw ConfigError("prop1_construct: embedding dimension " + std::to_string(embed_dim) +
                      " below rank " + std::to_string(rank) + " of the kernel sum");
  }
  // Retained eigenpairs, largest first.
  Eigen::MatrixXd basis(h, rank);
  Eigen::VectorXd lambda(rank);
  for (Index r = 0; r < rank; ++r) {
    basis.col(r) = es.eigenvectors().col(h - 1 - r);
    lambda[r] = ev[h - 1 - r];
  }
  const Eigen::VectorXd quarter = lambda.array().pow(0.25);
  const Eigen::VectorXd inv_quarter = quarter.cwiseInverse();
  const double ratio = std::pow(p.gamma / p.beta, 0.25);

  Eigen::MatrixXd Lmat = Eigen::MatrixXd::Zero(h, embed_dim);
  Lmat.leftCols(rank) = ratio * basis * quarter.asDiagonal();

  std::vector<LocalMetric> Ms;
  Ms.reserve(Ks.size());
  const double metric_scale = std::sqrt(p.beta / p.gamma);
  for (std::size_t t = 0; t < Ks.size(); ++t) {
    const Eigen::MatrixXd raw = inv_quarter.asDiagonal() *
                                (basis.transpose() * Ks[t] * basis) *
                                inv_quarter.asDiagonal();
    const Eigen::MatrixXd core = 0.5 * metric_scale * (raw + raw.transpose());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(embed_dim, embed_dim);
    M.topLeftCorner(rank, rank) = core;
    Ms.emplace_back(std::move(M), static_cast<int>(t));
  }
  return {GlobalTransform(std::move(Lmat)), std::move(Ms)};
}

}  // namespace mvml
