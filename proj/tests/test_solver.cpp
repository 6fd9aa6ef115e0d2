#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "mvml/solver.hpp"
#include "mvml/synthetic.hpp"
#include "test_helpers.hpp"

using namespace mvml;
using Eigen::MatrixXd;

namespace {

struct ClusterInstance {
  TripletDataset data;
  MatrixXd points;  // N x 2
};

/// Two tight, well-separated clusters of 10 points each plus consistent
/// triplets sampled from the Euclidean oracle.
ClusterInstance two_cluster_dataset(Index triplet_count, std::uint64_t seed) {
  Rng rng(seed);
  const Index n = 20;
  MatrixXd pts(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double cx = i < n / 2 ? 0.0 : 8.0;
    pts(i, 0) = cx + 0.5 * rng.gaussian();
    pts(i, 1) = 0.5 * rng.gaussian();
  }
  MatrixXd dist(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) dist(i, j) = (pts.row(i) - pts.row(j)).norm();
  }
  dist.diagonal().setZero();
  ClusterInstance inst;
  inst.points = pts;
  inst.data.num_objects = n;
  inst.data.views.push_back(sample_triplets(dist, 0, triplet_count, seed + 1));
  return inst;
}

TripletDataset multi_view_dataset(Index n, std::vector<Index> dims, Index per_view,
                                  std::uint64_t seed) {
  const auto synth = gen_uniform(n, 6, dims, seed);
  TripletDataset data;
  data.num_objects = n;
  for (std::size_t v = 0; v < dims.size(); ++v) {
    data.views.push_back(
        sample_triplets(synth.views.dist[v], static_cast<int>(v), per_view, seed + 100 + v));
  }
  return data;
}

Index violated_training_triplets(const TrainedModel& model, const TripletDataset& data) {
  Index wrong = 0;
  for (std::size_t t = 0; t < data.views.size(); ++t) {
    for (const auto& tr : data.views[t]) {
      if (model.distance(static_cast<Index>(t), tr.i, tr.j, data.feature_ptr()) >=
          model.distance(static_cast<Index>(t), tr.i, tr.k, data.feature_ptr())) {
        ++wrong;
      }
    }
  }
  return wrong;
}

SolverConfig small_config() {
  SolverConfig cfg;
  cfg.embed_dim = 2;
  cfg.eta0 = 1e-2;
  cfg.outer_max = 200;
  cfg.rel_tol = 1e-6;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("config validation and mode strings") {
  SolverConfig cfg;
  cfg.embed_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.m_max = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.rel_tol = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.eta0 = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(SolverConfig{}.validate());

  CHECK(train_mode_from_string("joint") == TrainMode::joint);
  CHECK(train_mode_from_string("independent") == TrainMode::independent);
  CHECK(train_mode_from_string("pooled") == TrainMode::pooled);
  CHECK_THROWS_AS(train_mode_from_string("bogus"), ConfigError);
  CHECK(baseline_param_from_string("full_psd") == BaselineParam::full_psd);
}

TEST_CASE("objective sums losses and regularizer") {
  TripletDataset data;
  data.num_objects = 3;
  data.views.push_back({});
  const GlobalTransform L = GlobalTransform::identity(3);
  std::vector<LocalMetric> Ms;
  Ms.emplace_back(MatrixXd::Identity(3, 3));
  // No triplets: regularizer only.
  CHECK(objective(data, L, Ms, 1.0, 1.0) == doctest::Approx(6.0));

  // One violated triplet with d_ij - d_ik = 1.
  TripletDataset vio;
  vio.num_objects = 3;
  MatrixXd pts(3, 1);
  pts << 0.0, std::sqrt(2.0), 1.0;  // d01 = 2, d02 = 1
  vio.features = pts;
  vio.views.push_back({TripletTerm(0, 1, 2)});
  const GlobalTransform L1 = GlobalTransform::identity(1);
  std::vector<LocalMetric> M1;
  M1.emplace_back(MatrixXd::Identity(1, 1));
  CHECK(objective(vio, L1, M1, 1.0, 1.0) == doctest::Approx(2.0 + 2.0));
}

TEST_CASE("objective decomposes over views when L is the identity") {
  TripletDataset data = multi_view_dataset(15, {2, 3}, 25, 59);
  const Index h = data.input_dim();
  const GlobalTransform L = GlobalTransform::identity(h);
  Rng rng(5);
  std::vector<LocalMetric> Ms;
  Ms.emplace_back(mvml::testing::random_psd(h, rng), 0);
  Ms.emplace_back(mvml::testing::random_psd(h, rng), 1);
  const double whole = objective(data, L, Ms, 1.0, 0.7);
  double parts = 0.0;
  for (int v = 0; v < 2; ++v) {
    TripletDataset single;
    single.num_objects = data.num_objects;
    single.views.push_back(data.views[v]);
    parts += objective(single, L, {Ms[v]}, 1.0 / 2.0, 0.7);  // split the shared beta term
  }
  CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("pre-satisfied triplets leave only the regularizer and L shrinks") {
  ClusterInstance inst = two_cluster_dataset(60, 5);
  // Keep only triplets whose squared-distance gap is solid, then scale the
  // geometry so every margin is far above the unit hinge margin.
  std::vector<TripletTerm> strong;
  for (const auto& t : inst.data.views[0]) {
    const double gap = (inst.points.row(t.i) - inst.points.row(t.k)).squaredNorm() -
                       (inst.points.row(t.i) - inst.points.row(t.j)).squaredNorm();
    if (gap > 0.05) strong.push_back(t);
  }
  REQUIRE(strong.size() > 20);
  inst.data.views[0] = strong;

  SolverConfig cfg = small_config();
  cfg.beta = 0.1;
  cfg.gamma = 0.1;
  cfg.outer_max = 10;
  cfg.rel_tol = 0.0;
  cfg.init_transform = 10.0 * inst.points;  // margins scale by 100
  TrainedModel model = train(inst.data, cfg);

  const double init_reg =
      cfg.gamma * 2.0 + cfg.beta * (10.0 * inst.points).squaredNorm();  // tr(I_2) = 2
  CHECK(model.objective_trace.front() == doctest::Approx(init_reg));  // loss term is zero
  for (std::size_t i = 1; i < model.objective_trace.size(); ++i) {
    CHECK(model.objective_trace[i] <= model.objective_trace[i - 1] + 1e-12);
  }
  CHECK(violated_training_triplets(model, inst.data) == 0);
  // The ridge keeps shrinking the transform while no triplet pushes back.
  CHECK(model.objective_trace.back() < init_reg);
}

TEST_CASE("consistent two-cluster data trains to zero triplet error") {
  // Oracle distances follow the cluster structure: within-cluster pairs are
  // nearer than between-cluster pairs, so all 500 triplets are consistent.
  const Index n = 20;
  MatrixXd dist(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      dist(i, j) = (i == j) ? 0.0 : ((i < n / 2) == (j < n / 2) ? 1.0 : 2.0);
    }
  }
  TripletDataset data;
  data.num_objects = n;
  data.views.push_back(sample_triplets(dist, 0, 500, 7));

  SolverConfig cfg = small_config();
  cfg.gamma = 0.05;
  cfg.beta = 0.1;
  cfg.rel_tol = 0.0;
  cfg.outer_max = 200;
  TrainedModel model = train(data, cfg);
  CHECK(violated_training_triplets(model, data) == 0);
  CHECK(model.objective_trace.size() <= 201);
  for (const auto& M : model.metrics) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M.matrix, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -kPsdTol);
  }
}

TEST_CASE("independent mode equals the sum of single-view runs") {
  TripletDataset data = multi_view_dataset(25, {2, 3, 4}, 60, 11);
  SolverConfig cfg = small_config();
  cfg.mode = TrainMode::independent;
  cfg.outer_max = 30;

  for (BaselineParam param : {BaselineParam::factored, BaselineParam::full_psd}) {
    cfg.baseline_param = param;
    TrainedModel model = train(data, cfg);
    double total = 0.0;
    for (int v = 0; v < 3; ++v) {
      TripletDataset single;
      single.num_objects = 25;
      single.views.push_back(data.views[v]);
      TrainedModel sub = train(single, cfg);
      total += sub.objective_trace.back();
    }
    CHECK(model.objective_trace.back() == doctest::Approx(total).epsilon(1e-10));
  }
}

TEST_CASE("joint with frozen identity transform matches pooled full_psd exactly") {
  ClusterInstance inst = two_cluster_dataset(80, 13);
  const Index h = inst.data.input_dim();

  SolverConfig joint_cfg;
  joint_cfg.mode = TrainMode::joint;
  joint_cfg.embed_dim = h;
  joint_cfg.freeze_transform = true;
  joint_cfg.init_transform = MatrixXd::Identity(h, h);
  joint_cfg.outer_max = 25;
  joint_cfg.seed = 17;

  SolverConfig pooled_cfg = joint_cfg;
  pooled_cfg.mode = TrainMode::pooled;
  pooled_cfg.baseline_param = BaselineParam::full_psd;
  pooled_cfg.freeze_transform = false;
  pooled_cfg.init_transform.reset();

  TrainedModel joint_model = train(inst.data, joint_cfg);
  TrainedModel pooled_model = train(inst.data, pooled_cfg);
  REQUIRE(joint_model.objective_trace.size() == pooled_model.objective_trace.size());
  for (std::size_t i = 0; i < joint_model.objective_trace.size(); ++i) {
    CHECK(joint_model.objective_trace[i] ==
          doctest::Approx(pooled_model.objective_trace[i]).epsilon(1e-10));
  }
}

TEST_CASE("deterministic runs are bit-identical, also across view threads") {
  TripletDataset data = multi_view_dataset(20, {2, 4}, 70, 23);
  SolverConfig cfg = small_config();
  cfg.deterministic = true;
  cfg.outer_max = 30;
  TrainedModel a = train(data, cfg);
  TrainedModel b = train(data, cfg);
  CHECK((a.transform.matrix.array() == b.transform.matrix.array()).all());
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t t = 0; t < a.metrics.size(); ++t) {
    CHECK((a.metrics[t].matrix.array() == b.metrics[t].matrix.array()).all());
  }
  CHECK(a.objective_trace == b.objective_trace);

  // Per-view metric subproblems are disjoint, so worker count cannot change
  // deterministic results.
  SolverConfig threaded = cfg;
  threaded.threads = 2;
  TrainedModel c = train(data, threaded);
  CHECK((a.transform.matrix.array() == c.transform.matrix.array()).all());
  CHECK(a.objective_trace == c.objective_trace);
}

TEST_CASE("metric phase is monotone once the step size is small enough") {
  // For fixed L the per-view subproblem is convex in M; halve eta0 until the
  // M-phase trace is monotone and assert it stays monotone there.
  ClusterInstance inst = two_cluster_dataset(100, 29);
  const Index h = inst.data.input_dim();
  const double gamma = 0.2;
  const GlobalTransform Lt = GlobalTransform::identity(h);

  double eta0 = 0.1;
  bool monotone = false;
  for (int halvings = 0; halvings < 12 && !monotone; ++halvings, eta0 *= 0.5) {
    MatrixXd M = MatrixXd::Identity(h, h);
    double prev = std::numeric_limits<double>::infinity();
    monotone = true;
    for (int m = 1; m <= 40; ++m) {
      const MatrixXd g = grad_M(Lt, LocalMetric(M), inst.data.views[0], nullptr, gamma);
      M = project_psd(M - (eta0 / std::sqrt(static_cast<double>(m))) * g);
      double obj = gamma * M.trace();
      for (const auto& tr : inst.data.views[0]) {
        obj += triplet_loss(Lt, LocalMetric(M), tr, nullptr);
      }
      if (obj > prev + 1e-12) {
        monotone = false;
        break;
      }
      prev = obj;
    }
  }
  CHECK(monotone);
}

TEST_CASE("parameter counts per mode") {
  TripletDataset data = multi_view_dataset(30, {2, 3}, 40, 31);
  SolverConfig cfg = small_config();
  cfg.embed_dim = 3;
  cfg.outer_max = 3;

  cfg.mode = TrainMode::joint;
  CHECK(train(data, cfg).parameter_count() == 30u * 3 + 2u * 3 * 3);
  cfg.mode = TrainMode::independent;
  CHECK(train(data, cfg).parameter_count() == 2u * 30 * 3);
  cfg.mode = TrainMode::pooled;
  CHECK(train(data, cfg).parameter_count() == 30u * 3);
}

TEST_CASE("divergence guard names the iteration") {
  ClusterInstance inst = two_cluster_dataset(100, 37);
  SolverConfig cfg = small_config();
  cfg.eta0 = 1e5;  // absurd step size
  cfg.outer_max = 50;
  try {
    train(inst.data, cfg);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(e.iteration >= 1);
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("train rejects empty datasets and bad dimensions") {
  TripletDataset data;
  data.num_objects = 5;
  data.views.push_back({});
  SolverConfig cfg = small_config();
  CHECK_THROWS_AS(train(data, cfg), DataError);

  ClusterInstance inst = two_cluster_dataset(10, 41);
  cfg.embed_dim = 50;  // exceeds H = N = 20
  CHECK_THROWS_AS(train(inst.data, cfg), ConfigError);
}

TEST_CASE("progress stream emits one record per outer iteration") {
  ClusterInstance inst = two_cluster_dataset(40, 43);
  SolverConfig cfg = small_config();
  cfg.outer_max = 7;
  cfg.rel_tol = 0.0;
  std::ostringstream progress;
  TrainedModel model = train(inst.data, cfg, &progress);
  std::istringstream lines(progress.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    std::istringstream ss(line);
    int iter;
    double obj, rel, ms;
    CHECK((ss >> iter >> obj >> rel >> ms));
    ++count;
  }
  CHECK(count == static_cast<int>(model.objective_trace.size()) - 1);
}

TEST_CASE("cross_validate picks the separating candidate and handles edges") {
  TripletDataset data = multi_view_dataset(20, {3}, 80, 47);
  SolverConfig cfg = small_config();
  cfg.outer_max = 40;

  CHECK(default_cv_grid().size() == 11);
  CHECK(default_cv_grid().front() == doctest::Approx(1e-5));
  CHECK(default_cv_grid().back() == doctest::Approx(1e5));

  // Degenerate grid returns its only candidate.
  auto single = cross_validate(data, cfg, {0.5});
  CHECK(single.best_product == 0.5);
  REQUIRE(single.mean_validation_error.size() == 1);

  // A sane product must beat an absurdly strong regularizer that collapses
  // the embedding to zero (all ties count as violations).
  auto pair = cross_validate(data, cfg, {1e-2, 1e8});
  CHECK(pair.best_product == 1e-2);
  CHECK(pair.mean_validation_error[0] < pair.mean_validation_error[1]);

  TripletDataset tiny;
  tiny.num_objects = 20;
  tiny.views.push_back({data.views[0].begin(), data.views[0].begin() + 4});
  CHECK_THROWS_AS(cross_validate(tiny, cfg, {1.0}), DataError);
  CHECK_THROWS_AS(cross_validate(data, cfg, {}), ConfigError);
}

TEST_CASE("cv tie-break prefers the smaller product") {
  TripletDataset data = multi_view_dataset(15, {2}, 30, 53);
  SolverConfig cfg = small_config();
  cfg.outer_max = 10;
  auto res = cross_validate(data, cfg, {1e9, 1e7});
  // Both candidates collapse the metric to zero -> equal errors -> tie.
  CHECK(res.mean_validation_error[0] == res.mean_validation_error[1]);
  CHECK(res.best_product == 1e7);
}

}  // TEST_SUITE
