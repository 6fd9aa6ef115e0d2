#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvml/io.hpp"
#include "mvml/procrustes.hpp"
#include "mvml/synthetic.hpp"
#include "test_helpers.hpp"

using namespace mvml;
using mvml::testing::random_matrix;
using Eigen::MatrixXd;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mvml_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::uint64_t key(const TripletTerm& t) {
  return (static_cast<std::uint64_t>(t.i) << 42) ^ (static_cast<std::uint64_t>(t.j) << 21) ^
         static_cast<std::uint64_t>(t.k);
}

/// Grid-search oracle for the alignment residual: coarse-to-fine scan over
/// scale and translation.
double procrustes_grid_oracle(const MatrixXd& a, const MatrixXd& b) {
  double s_lo = 0.0, s_hi = 4.0;
  double vx_lo = -6.0, vx_hi = 6.0, vy_lo = -6.0, vy_hi = 6.0;
  double best = std::numeric_limits<double>::infinity();
  double bs = 0, bx = 0, by = 0;
  for (int round = 0; round < 8; ++round) {
    const int steps = 24;
    for (int is = 0; is <= steps; ++is) {
      const double s = s_lo + (s_hi - s_lo) * is / steps;
      for (int ix = 0; ix <= steps; ++ix) {
        const double vx = vx_lo + (vx_hi - vx_lo) * ix / steps;
        for (int iy = 0; iy <= steps; ++iy) {
          const double vy = vy_lo + (vy_hi - vy_lo) * iy / steps;
          double r = 0.0;
          for (Index p = 0; p < a.rows(); ++p) {
            const double dx = s * b(p, 0) + vx - a(p, 0);
            const double dy = s * b(p, 1) + vy - a(p, 1);
            r += dx * dx + dy * dy;
          }
          if (r < best) {
            best = r;
            bs = s;
            bx = vx;
            by = vy;
          }
        }
      }
    }
    const double shrink = 0.2;
    const double sw = (s_hi - s_lo) * shrink, xw = (vx_hi - vx_lo) * shrink,
                 yw = (vy_hi - vy_lo) * shrink;
    s_lo = std::max(0.0, bs - sw);
    s_hi = bs + sw;
    vx_lo = bx - xw;
    vx_hi = bx + xw;
    vy_lo = by - yw;
    vy_hi = by + yw;
  }
  return best;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("gen_uniform shape, invariants, determinism") {
  const auto data = gen_uniform(40, 10, {2, 3, 4, 5, 6, 7}, 9);
  CHECK(data.points.rows() == 40);
  CHECK(data.points.cols() == 10);
  CHECK(data.views.num_views() == 6);
  CHECK(data.labels.empty());
  CHECK((data.points.array() >= 0.0).all());
  CHECK((data.points.array() < 1.0).all());
  data.views.validate();  // symmetry, zero diagonal, nonnegativity

  const auto again = gen_uniform(40, 10, {2, 3, 4, 5, 6, 7}, 9);
  for (int v = 0; v < 6; ++v) {
    CHECK((data.views.dist[v].array() == again.views.dist[v].array()).all());
  }
  const auto other = gen_uniform(40, 10, {2, 3, 4, 5, 6, 7}, 10);
  CHECK((data.views.dist[0] - other.views.dist[0]).norm() > 0.0);
}

TEST_CASE("full-dimensional subspace view equals ambient distances") {
  const auto data = gen_uniform(25, 6, {6}, 4);
  for (Index i = 0; i < 25; ++i) {
    for (Index j = 0; j < 25; ++j) {
      const double ambient = (data.points.row(i) - data.points.row(j)).norm();
      CHECK(data.views.dist[0](i, j) == doctest::Approx(ambient).epsilon(1e-12));
    }
  }
}

TEST_CASE("subspace-coordinate distances equal ambient-projector distances") {
  const auto data = gen_uniform(15, 8, {3}, 21);
  const MatrixXd& basis = data.bases[0];
  const MatrixXd projector = basis * basis.transpose();  // ambient-space projection
  for (Index i = 0; i < 15; ++i) {
    for (Index j = 0; j < i; ++j) {
      const double via_proj =
          (projector * (data.points.row(i) - data.points.row(j)).transpose()).norm();
      CHECK(data.views.dist[0](i, j) == doctest::Approx(via_proj).epsilon(1e-12));
    }
  }
}

TEST_CASE("gen_clustered balance and degenerate variance") {
  const auto data = gen_clustered(200, 4, 1.0, 10.0, 10, {2, 3}, 5);
  std::array<int, 4> counts{0, 0, 0, 0};
  for (int label : data.labels) ++counts[label];
  for (int c = 0; c < 4; ++c) CHECK(counts[c] == 50);

  const auto degen = gen_clustered(40, 4, 0.0, 10.0, 10, {2}, 5);
  for (Index i = 0; i < 40; ++i) {
    for (Index j = 0; j < 40; ++j) {
      if (degen.labels[i] == degen.labels[j]) CHECK(degen.views.dist[0](i, j) == 0.0);
    }
  }
}

TEST_CASE("gen_clustered separates clusters in ambient space") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto data = gen_clustered(80, 4, 1.0, 10.0, 10, {5}, seed);
    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    for (Index i = 0; i < 80; ++i) {
      for (Index j = 0; j < i; ++j) {
        const double d = (data.points.row(i) - data.points.row(j)).norm();
        if (data.labels[i] == data.labels[j]) {
          intra += d;
          ++n_intra;
        } else {
          inter += d;
          ++n_inter;
        }
      }
    }
    CHECK(inter / n_inter > intra / n_intra);
  }
}

TEST_CASE("procrustes_residual exact and invariance cases") {
  Rng rng(31);
  const MatrixXd a = random_matrix(7, 2, rng);
  CHECK(procrustes_residual(a, a) == doctest::Approx(0.0));

  MatrixXd b = 2.0 * a;
  b.col(0).array() += 3.5;
  b.col(1).array() -= 1.25;
  CHECK(procrustes_residual(a, b) == doctest::Approx(0.0).epsilon(1e-12));

  // Translation invariance on both sides.
  MatrixXd b2 = random_matrix(7, 2, rng);
  MatrixXd b2_shift = b2;
  b2_shift.col(0).array() += 11.0;
  CHECK(procrustes_residual(a, b2) ==
        doctest::Approx(procrustes_residual(a, b2_shift)).epsilon(1e-10));

  MatrixXd flat(3, 2);
  flat << 1, 1, 1, 1, 1, 1;
  CHECK_THROWS_AS(procrustes_residual(a.topRows(3), flat), DataError);
}

TEST_CASE("procrustes_residual of a rotated shape matches the grid oracle") {
  Rng rng(37);
  const MatrixXd a = random_matrix(5, 2, rng);
  MatrixXd rot(2, 2);
  rot << 0, -1, 1, 0;  // 90 degrees, outside the scale+translation group
  const MatrixXd b = a * rot.transpose();
  const double got = procrustes_residual(a, b);
  CHECK(got > 1e-3);
  CHECK(got == doctest::Approx(procrustes_grid_oracle(a, b)).epsilon(1e-6));
}

TEST_CASE("landmark view matrices are symmetric oracles consistent with the residual") {
  Rng rng(43);
  LandmarkSet set;
  for (int o = 0; o < 8; ++o) set.objects.push_back(random_matrix(16, 2, rng));
  const auto views = default_landmark_views();
  CHECK(views.size() == 5);
  CHECK(views[0].landmarks.size() == 16);
  CHECK(views[1].landmarks == std::vector<Index>{0, 1, 2, 3, 15});
  CHECK(views[2].landmarks == std::vector<Index>{6, 7, 8});
  CHECK(views[3].landmarks.size() == 13);
  CHECK(views[4].landmarks.size() == 11);

  for (const auto& view : views) {
    const MatrixXd dist = landmark_distance_matrix(set, view.landmarks);
    GroundTruthViews gt;
    gt.dist.push_back(dist);
    gt.validate();
    // Anchored comparisons agree with the raw residual ordering.
    MatrixXd sub_i(view.landmarks.size(), 2), sub_j(view.landmarks.size(), 2);
    for (Index i = 0; i < 8; ++i) {
      Eigen::MatrixXd anchor(view.landmarks.size(), 2);
      for (std::size_t r = 0; r < view.landmarks.size(); ++r) {
        anchor.row(r) = set.objects[i].row(view.landmarks[r]);
      }
      const Eigen::MatrixXd centered_anchor = anchor.rowwise() - anchor.colwise().mean();
      const double anchor_norm = centered_anchor.squaredNorm();
      for (Index j = 0; j < 8; ++j) {
        if (j == i) continue;
        Eigen::MatrixXd other(view.landmarks.size(), 2);
        for (std::size_t r = 0; r < view.landmarks.size(); ++r) {
          other.row(r) = set.objects[j].row(view.landmarks[r]);
        }
        CHECK(dist(i, j) * anchor_norm ==
              doctest::Approx(procrustes_residual(anchor, other)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("sample_triplets orientation, dedupe, and enumeration oracle") {
  const auto data = gen_uniform(5, 4, {4}, 13);
  const MatrixXd& dist = data.views.dist[0];

  CHECK_THROWS_AS(sample_triplets(dist, 0, 0, 1), ConfigError);

  // Brute-force enumeration oracle of all valid oriented triples.
  std::set<std::uint64_t> valid;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      for (Index k = 0; k < 5; ++k) {
        if (i == j || i == k || j == k) continue;
        if (dist(i, j) < dist(i, k)) valid.insert(key(TripletTerm(i, j, k)));
      }
    }
  }
  const auto exhaustive = sample_triplets(dist, 0, static_cast<Index>(valid.size()), 2);
  std::set<std::uint64_t> got;
  for (const auto& t : exhaustive) {
    CHECK(dist(t.i, t.j) < dist(t.i, t.k));
    got.insert(key(t));
  }
  CHECK(got == valid);  // exactly the enumeration, no duplicates
  CHECK_THROWS_AS(sample_triplets(dist, 0, static_cast<Index>(valid.size()) + 1, 2), DataError);
}

TEST_CASE("sample_triplets on large oracles stays valid and deduped") {
  const auto data = gen_uniform(80, 6, {4}, 17);
  const MatrixXd& dist = data.views.dist[0];
  const auto sample = sample_triplets(dist, 3, 2000, 7);
  CHECK(sample.size() == 2000);
  std::set<std::uint64_t> seen;
  for (const auto& t : sample) {
    CHECK(dist(t.i, t.j) < dist(t.i, t.k));
    CHECK(t.view == 3);
    CHECK(seen.insert(key(t)).second);
  }
  // Determinism.
  const auto again = sample_triplets(dist, 3, 2000, 7);
  CHECK(std::equal(sample.begin(), sample.end(), again.begin()));
}

TEST_CASE("partition_to_triplets") {
  const auto t18 = partition_to_triplets(0, {1, 2, 3}, {4, 5, 6, 7, 8, 9});
  CHECK(t18.size() == 18);
  CHECK(partition_to_triplets(0, {}, {4, 5}).empty());
  const auto single = partition_to_triplets(1, {2}, {3});
  REQUIRE(single.size() == 1);
  CHECK(single[0] == TripletTerm(1, 2, 3, 0));
  CHECK_THROWS_AS(partition_to_triplets(1, {2, 3}, {3, 4}), DataError);
  CHECK_THROWS_AS(partition_to_triplets(1, {1, 2}, {3}), DataError);
}

TEST_CASE("split_train_test floor rounding, determinism, disjointness, equalize") {
  const auto data = gen_uniform(30, 5, {3, 4}, 19);
  std::vector<std::vector<TripletTerm>> views;
  views.push_back(sample_triplets(data.views.dist[0], 0, 103, 1));
  views.push_back(sample_triplets(data.views.dist[1], 1, 57, 2));

  const auto split = split_train_test(views, 0.2, 11);
  CHECK(split.test[0].size() == 20);  // floor(0.2 * 103)
  CHECK(split.train[0].size() == 83);
  CHECK(split.test[1].size() == 11);  // floor(0.2 * 57)
  CHECK(split.train[1].size() == 46);

  for (int v = 0; v < 2; ++v) {
    std::set<std::uint64_t> train_keys, test_keys;
    for (const auto& t : split.train[v]) train_keys.insert(key(t));
    for (const auto& t : split.test[v]) test_keys.insert(key(t));
    CHECK(train_keys.size() + test_keys.size() == views[v].size());
    for (auto k : test_keys) CHECK(train_keys.count(k) == 0);
  }

  const auto again = split_train_test(views, 0.2, 11);
  CHECK(std::equal(split.train[0].begin(), split.train[0].end(), again.train[0].begin()));

  const auto equalized = split_train_test(views, 0.2, 11, true);
  CHECK(equalized.train[0].size() == equalized.train[1].size());
  CHECK(equalized.train[0].size() == 46);

  std::vector<std::vector<TripletTerm>> with_empty = views;
  with_empty.push_back({});
  CHECK_THROWS_AS(split_train_test(with_empty, 0.2, 1, true), DataError);
  CHECK_THROWS_AS(split_train_test(views, 0.0, 1), ConfigError);
}

TEST_CASE("triplet file round trip with comments and validation") {
  TempDir dir;
  const auto path = dir.path / "triplets.tsv";
  std::vector<std::vector<TripletTerm>> views(3);
  views[0] = {TripletTerm(0, 1, 2, 0), TripletTerm(3, 2, 0, 0)};
  views[2] = {TripletTerm(4, 0, 1, 2)};  // view 1 left empty
  save_triplets(path, views);
  const auto loaded = load_triplets(path, 5);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0] == views[0]);
  CHECK(loaded[1].empty());
  CHECK(loaded[2] == views[2]);

  {
    std::ofstream out(path, std::ios::app);
    out << "# trailing comment\n";
  }
  CHECK(load_triplets(path, 5).size() == 3);

  const auto bad = dir.path / "bad.tsv";
  std::ofstream(bad) << "0\t1\t2\n";
  CHECK_THROWS_WITH_AS(static_cast<void>(load_triplets(bad)),
                       doctest::Contains("bad.tsv:1"), DataError);
  std::ofstream(bad) << "0\t1\t1\t2\n";
  CHECK_THROWS_AS(static_cast<void>(load_triplets(bad)), DataError);
  std::ofstream(bad) << "0\t1\t2\t9\n";
  CHECK_THROWS_AS(static_cast<void>(load_triplets(bad, 5)), DataError);
  CHECK_NOTHROW(static_cast<void>(load_triplets(bad, 10)));
}

TEST_CASE("matrix, feature, and label files round trip") {
  TempDir dir;
  Rng rng(51);
  const MatrixXd m = random_matrix(7, 3, rng);
  save_matrix(dir.path / "m.txt", m);
  CHECK(((load_matrix(dir.path / "m.txt") - m).array() == 0.0).all());

  const MatrixXd x = random_matrix(6, 4, rng);
  save_features(dir.path / "x.tsv", x);
  CHECK(((load_features(dir.path / "x.tsv") - x).array() == 0.0).all());

  const std::vector<int> labels{3, 1, 4, 1, 5};
  save_labels(dir.path / "y.tsv", labels);
  CHECK(load_labels(dir.path / "y.tsv") == labels);

  std::ofstream(dir.path / "y_gap.tsv") << "0\t1\n2\t5\n";
  CHECK_THROWS_AS(static_cast<void>(load_labels(dir.path / "y_gap.tsv")), DataError);
}

TEST_CASE("landmark files and view configs round trip") {
  TempDir dir;
  Rng rng(61);
  LandmarkSet set;
  for (int o = 0; o < 3; ++o) set.objects.push_back(random_matrix(16, 2, rng));
  save_landmarks(dir.path / "lm.tsv", set);
  const auto loaded = load_landmarks(dir.path / "lm.tsv");
  REQUIRE(loaded.num_objects() == 3);
  for (int o = 0; o < 3; ++o) {
    CHECK(((loaded.objects[o] - set.objects[o]).array() == 0.0).all());
  }

  const auto views = default_landmark_views();
  save_landmark_views(dir.path / "views.json", views);
  const auto loaded_views = load_landmark_views(dir.path / "views.json");
  REQUIRE(loaded_views.size() == views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    CHECK(loaded_views[v].name == views[v].name);
    CHECK(loaded_views[v].landmarks == views[v].landmarks);
  }
}

}  // TEST_SUITE
