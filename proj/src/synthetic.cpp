#include "mvml/synthetic.hpp"

#include <cmath>

#include "mvml/parallel.hpp"

namespace mvml {

namespace detail {

Eigen::MatrixXd random_subspace_basis(Index dim, Index sub_dim, Rng& rng) {
  if (sub_dim < 1 || sub_dim > dim) throw ConfigError("subspace dimension outside [1, dim]");
  Eigen::MatrixXd g(dim, sub_dim);
  for (Index r = 0; r < dim; ++r) {
    for (Index c = 0; c < sub_dim; ++c) g(r, c) = rng.gaussian();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(dim, sub_dim);
}

Eigen::MatrixXd projected_distances(const Eigen::MatrixXd& points,
                                    const Eigen::MatrixXd& basis, int threads) {
  const Index n = points.rows();
  const Eigen::MatrixXd proj = points * basis;  // N x d_v coordinates
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  parallel_for(0, n, threads, [&](std::ptrdiff_t i) {
    for (Index j = 0; j < i; ++j) {
      const double d = (proj.row(i) - proj.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  });
  return dist;
}

}  // namespace detail

namespace {

SyntheticData finish(Eigen::MatrixXd points, std::vector<int> labels,
                     const std::vector<Index>& subspace_dims, Rng& rng, int threads) {
  SyntheticData data;
  data.points = std::move(points);
  data.labels = std::move(labels);
  const Index dim = data.points.cols();
  for (Index sub : subspace_dims) {
    data.bases.push_back(detail::random_subspace_basis(dim, sub, rng));
  }
  for (const auto& basis : data.bases) {
    data.views.dist.push_back(detail::projected_distances(data.points, basis, threads));
  }
  data.views.validate();
  return data;
}

}  // namespace

SyntheticData gen_uniform(Index n, Index dim, const std::vector<Index>& subspace_dims,
                          std::uint64_t seed, int threads) {
  if (n < 1 || dim < 1) throw ConfigError("gen_uniform: n and dim must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd points(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) points(i, d) = rng.uniform();
  }
  return finish(std::move(points), {}, subspace_dims, rng, threads);
}

SyntheticData gen_clustered(Index n, int clusters, double variance, double box_side,
                            Index dim, const std::vector<Index>& subspace_dims,
                            std::uint64_t seed, int threads) {
  if (n < 1 || dim < 1) throw ConfigError("gen_clustered: n and dim must be >= 1");
  if (clusters < 1) throw ConfigError("gen_clustered: clusters must be >= 1");
  if (variance < 0.0) throw ConfigError("gen_clustered: variance must be >= 0");
  Rng rng(seed);
  Eigen::MatrixXd centers(clusters, dim);
  for (int c = 0; c < clusters; ++c) {
    for (Index d = 0; d < dim; ++d) centers(c, d) = rng.uniform(0.0, box_side);
  }
  const double stddev = std::sqrt(variance);
  Eigen::MatrixXd points(n, dim);
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % clusters);  // balanced round-robin
    labels[i] = c;
    for (Index d = 0; d < dim; ++d) points(i, d) = centers(c, d) + stddev * rng.gaussian();
  }
  return finish(std::move(points), std::move(labels), subspace_dims, rng, threads);
}

}  // namespace mvml
