#include <doctest.h>

#include <cmath>

#include "mvml/loss.hpp"
#include "mvml/solver.hpp"
#include "test_helpers.hpp"

using namespace mvml;
using mvml::testing::random_matrix;
using mvml::testing::random_orthogonal;
using mvml::testing::random_psd;
using mvml::testing::random_triplets;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Instance {
  TripletDataset data;
  MatrixXd L;
  std::vector<MatrixXd> Ms;
  double beta = 0.7;
  double gamma = 0.4;

  GlobalTransform transform() const { return GlobalTransform(L); }
  std::vector<LocalMetric> metrics() const {
    std::vector<LocalMetric> out;
    for (std::size_t t = 0; t < Ms.size(); ++t) out.emplace_back(Ms[t], static_cast<int>(t));
    return out;
  }
  double objective_value() const {
    return objective(data, transform(), metrics(), beta, gamma);
  }
  /// Smallest |hinge argument| over all triplets; gradient checks stay away
  /// from the kink.
  double kink_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    const auto Lt = transform();
    const auto ms = metrics();
    for (std::size_t t = 0; t < data.views.size(); ++t) {
      for (const auto& tr : data.views[t]) {
        const double d_ij = data.features
                                ? squared_distance(Lt, ms[t], data.features->row(tr.i),
                                                   data.features->row(tr.j))
                                : squared_distance_rows(Lt, ms[t], tr.i, tr.j);
        const double d_ik = data.features
                                ? squared_distance(Lt, ms[t], data.features->row(tr.i),
                                                   data.features->row(tr.k))
                                : squared_distance_rows(Lt, ms[t], tr.i, tr.k);
        margin = std::min(margin, std::abs(1.0 + d_ij - d_ik));
      }
    }
    return margin;
  }
};

/// N=20 instance with D=3, T=2, 30 triplets; featureless (H=N) or featured
/// (H=8). Retries sub-seeds until every hinge argument is > 1e-3 from zero.
Instance make_instance(std::uint64_t seed, bool featured) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(mix_seed(seed, attempt));
    Instance inst;
    const Index n = 20;
    const Index h = featured ? 8 : n;
    const Index d = 3;
    inst.data.num_objects = n;
    if (featured) inst.data.features = random_matrix(n, h, rng);
    inst.data.views.push_back(random_triplets(n, 15, 0, rng));
    inst.data.views.push_back(random_triplets(n, 15, 1, rng));
    inst.L = random_matrix(h, d, rng, 0.6);
    inst.Ms.push_back(random_psd(d, rng));
    inst.Ms.push_back(random_psd(d, rng));
    if (inst.kink_margin() > 1e-3) return inst;
  }
}

/// Independent objective route for the finite-difference oracle: plain
/// loops over raw matrices, tolerating the asymmetric metric perturbations
/// the strong types reject.
double raw_objective(const Instance& inst, const MatrixXd& L, const std::vector<MatrixXd>& Ms) {
  double total = inst.beta * L.squaredNorm();
  for (std::size_t t = 0; t < inst.data.views.size(); ++t) {
    total += inst.gamma * Ms[t].trace();
    for (const auto& tr : inst.data.views[t]) {
      VectorXd u_ij, u_ik;
      if (inst.data.features) {
        u_ij = L.transpose() *
               (inst.data.features->row(tr.i) - inst.data.features->row(tr.j)).transpose();
        u_ik = L.transpose() *
               (inst.data.features->row(tr.i) - inst.data.features->row(tr.k)).transpose();
      } else {
        u_ij = (L.row(tr.i) - L.row(tr.j)).transpose();
        u_ik = (L.row(tr.i) - L.row(tr.k)).transpose();
      }
      total += std::max(1.0 + u_ij.dot(Ms[t] * u_ij) - u_ik.dot(Ms[t] * u_ik), 0.0);
    }
  }
  return total;
}

double fd_relative_error_L(const Instance& inst, double step) {
  const MatrixXd analytic =
      grad_L(inst.transform(), inst.metrics(), inst.data.views, inst.data.feature_ptr(),
             inst.beta);
  MatrixXd fd(inst.L.rows(), inst.L.cols());
  MatrixXd L = inst.L;
  for (Index r = 0; r < inst.L.rows(); ++r) {
    for (Index c = 0; c < inst.L.cols(); ++c) {
      L(r, c) = inst.L(r, c) + step;
      const double plus = raw_objective(inst, L, inst.Ms);
      L(r, c) = inst.L(r, c) - step;
      const double minus = raw_objective(inst, L, inst.Ms);
      L(r, c) = inst.L(r, c);
      fd(r, c) = (plus - minus) / (2.0 * step);
    }
  }
  return (analytic - fd).norm() / std::max(fd.norm(), 1.0);
}

double fd_relative_error_M(const Instance& inst, std::size_t view, double step) {
  const MatrixXd analytic = grad_M(inst.transform(), LocalMetric(inst.Ms[view]),
                                   inst.data.views[view], inst.data.feature_ptr(), inst.gamma);
  const Index d = inst.Ms[view].rows();
  MatrixXd fd(d, d);
  std::vector<MatrixXd> Ms = inst.Ms;
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < d; ++c) {
      Ms[view](r, c) = inst.Ms[view](r, c) + step;
      const double plus = raw_objective(inst, inst.L, Ms);
      Ms[view](r, c) = inst.Ms[view](r, c) - step;
      const double minus = raw_objective(inst, inst.L, Ms);
      Ms[view](r, c) = inst.Ms[view](r, c);
      fd(r, c) = (plus - minus) / (2.0 * step);
    }
  }
  return (analytic - fd).norm() / std::max(fd.norm(), 1.0);
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("hinge") {
  CHECK(hinge(0.5, 2.0) == 0.0);
  CHECK(hinge(1.0, 1.0) == 1.0);
  CHECK(hinge(2.0, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("hinge is nonincreasing in d_ik") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const double d_ij = rng.uniform(0, 4);
    const double d_ik = rng.uniform(0, 4);
    const double bump = rng.uniform(0, 2);
    CHECK(hinge(d_ij, d_ik + bump) <= hinge(d_ij, d_ik));
  }
}

TEST_CASE("triplet_loss equilateral tie scores the unit margin") {
  MatrixXd pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0;  // pairwise distance 1
  const GlobalTransform L = GlobalTransform::identity(2);
  const LocalMetric M(MatrixXd::Identity(2, 2));
  CHECK(triplet_loss(L, M, TripletTerm(0, 1, 2), &pts) == doctest::Approx(1.0));
}

TEST_CASE("triplet_loss duplicate j reduces to max(1 - d_ik, 0)") {
  MatrixXd pts(3, 2);
  pts << 0.4, -0.2, 0.4, -0.2, 3.0, 1.0;  // object 1 duplicates object 0
  const GlobalTransform L = GlobalTransform::identity(2);
  const LocalMetric M(MatrixXd::Identity(2, 2));
  const double d_ik = squared_distance(L, M, pts.row(0), pts.row(2));
  CHECK(triplet_loss(L, M, TripletTerm(0, 1, 2), &pts) ==
        doctest::Approx(std::max(1.0 - d_ik, 0.0)));
  CHECK(triplet_loss(L, M, TripletTerm(0, 2, 1), &pts) == doctest::Approx(1.0 + d_ik));
}

TEST_CASE("triplet_loss matches the explicit-kernel oracle") {
  Rng rng(17);
  MatrixXd pts = random_matrix(5, 4, rng);
  const MatrixXd Lm = random_matrix(4, 2, rng);
  const MatrixXd Mm = random_psd(2, rng);
  const MatrixXd K = Lm * Mm * Lm.transpose();
  const GlobalTransform L(Lm);
  const LocalMetric M(Mm);
  for (int rep = 0; rep < 20; ++rep) {
    const auto t = random_triplets(5, 1, 0, rng)[0];
    const VectorXd dij = (pts.row(t.i) - pts.row(t.j)).transpose();
    const VectorXd dik = (pts.row(t.i) - pts.row(t.k)).transpose();
    const double expected = hinge(dij.dot(K * dij), dik.dot(K * dik));
    CHECK(triplet_loss(L, M, t, &pts) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(triplet_loss(L, M, TripletTerm(0, 1, 7), &pts), DataError);
}

TEST_CASE("grad_L with no active triplets is the ridge term") {
  // Two clusters far apart: triplets anchored inside a cluster with the
  // distractor in the other cluster are satisfied with a huge margin.
  MatrixXd pts(4, 2);
  pts << 0, 0, 0.1, 0, 50, 0, 50.1, 0;
  const GlobalTransform L = GlobalTransform::identity(2);
  std::vector<LocalMetric> Ms;
  Ms.emplace_back(MatrixXd::Identity(2, 2));
  const std::vector<std::vector<TripletTerm>> views{{TripletTerm(0, 1, 2), TripletTerm(3, 2, 0)}};
  const double beta = 0.3;
  const MatrixXd g = grad_L(L, Ms, views, &pts, beta);
  CHECK((g - 2.0 * beta * L.matrix).norm() == 0.0);
}

TEST_CASE("grad_L at L = 0 vanishes") {
  Rng rng(23);
  const Index n = 6;
  GlobalTransform L(MatrixXd::Zero(n, 2));
  std::vector<LocalMetric> Ms;
  Ms.emplace_back(MatrixXd::Identity(2, 2));
  const std::vector<std::vector<TripletTerm>> views{random_triplets(n, 10, 0, rng)};
  CHECK(grad_L(L, Ms, views, nullptr, 0.5).norm() == 0.0);
  CHECK(grad_L(L, Ms, {{}}, nullptr, 0.5).norm() == 0.0);
}

TEST_CASE("grad_M special cases") {
  const double gamma = 0.25;
  {
    const GlobalTransform L = GlobalTransform::identity(2);
    const LocalMetric M(MatrixXd::Identity(2, 2));
    const MatrixXd g = grad_M(L, M, {}, nullptr, gamma);
    CHECK((g - gamma * MatrixXd::Identity(2, 2)).norm() == 0.0);
  }
  {
    // One active triplet whose transformed differences coincide up to sign:
    // the rank-one terms cancel exactly.
    MatrixXd pts(3, 2);
    pts << 0, 0, 1, 1, -1, -1;  // x0 - x1 = -(x0 - x2)
    const GlobalTransform L = GlobalTransform::identity(2);
    const LocalMetric M(MatrixXd::Identity(2, 2));
    const MatrixXd g = grad_M(L, M, {TripletTerm(0, 1, 2)}, &pts, gamma);
    CHECK((g - gamma * MatrixXd::Identity(2, 2)).norm() < 1e-15);
  }
}

TEST_CASE("grad_M output is exactly symmetric") {
  Rng rng(29);
  const Index n = 12;
  const GlobalTransform L(random_matrix(n, 4, rng));
  const LocalMetric M(random_psd(4, rng));
  const auto triplets = random_triplets(n, 40, 0, rng);
  const MatrixXd g = grad_M(L, M, triplets, nullptr, 0.3);
  CHECK((g.array() == g.transpose().array()).all());
}

TEST_CASE("gradients match central finite differences away from kinks") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Instance inst = make_instance(seed, seed % 2 == 1);
    CHECK(fd_relative_error_L(inst, 1e-6) < 1e-5);
    CHECK(fd_relative_error_M(inst, 0, 1e-6) < 1e-5);
    CHECK(fd_relative_error_M(inst, 1, 1e-6) < 1e-5);
  }
}

TEST_CASE("objective is invariant under orthogonal reparametrization") {
  Rng rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const Instance inst = make_instance(100 + rep, rep % 2 == 0);
    const MatrixXd Q = random_orthogonal(3, rng);
    Instance rotated = inst;
    rotated.L = inst.L * Q;
    for (auto& M : rotated.Ms) {
      const MatrixXd m = Q.transpose() * M * Q;
      M = 0.5 * (m + m.transpose());
    }
    CHECK(rotated.objective_value() ==
          doctest::Approx(inst.objective_value()).epsilon(1e-10));
  }
}

}  // TEST_SUITE
