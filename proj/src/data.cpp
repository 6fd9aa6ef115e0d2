#include "mvml/data.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "mvml/rng.hpp"

namespace mvml {

Index TripletDataset::total_triplets() const {
  Index n = 0;
  for (const auto& v : views) n += static_cast<Index>(v.size());
  return n;
}

void TripletDataset::validate() const {
  if (num_objects < 1) throw DataError("dataset has no objects");
  for (const auto& v : views) {
    detail::check_indices(v, num_objects);
    for (const auto& t : v) {
      if (t.i == t.j || t.i == t.k || t.j == t.k) {
        throw DataError("triplet with repeated indices");
      }
    }
  }
  if (features && features->rows() != num_objects) {
    throw ShapeError("feature matrix rows != num_objects");
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != num_objects) {
    throw ShapeError("label count != num_objects");
  }
}

void GroundTruthViews::validate() const {
  for (const auto& d : dist) {
    if (d.rows() != d.cols()) throw ShapeError("distance matrix not square");
    if (d.rows() != num_objects()) throw ShapeError("distance matrix sizes differ across views");
    if ((d.diagonal().array() != 0.0).any()) throw DataError("distance matrix diagonal not zero");
    if ((d.array() < 0.0).any()) throw DataError("negative distance");
    if (!(d.array() == d.transpose().array()).all()) {
      throw DataError("distance matrix not symmetric");
    }
  }
}

namespace {

constexpr double kTieEps = 1e-12;

std::uint64_t triplet_key(Index n, const TripletTerm& t) {
  const auto un = static_cast<std::uint64_t>(n);
  return (static_cast<std::uint64_t>(t.i) * un + static_cast<std::uint64_t>(t.j)) * un +
         static_cast<std::uint64_t>(t.k);
}

/// All valid oriented triplets of a small oracle, in (i, j, k) scan order.
std::vector<TripletTerm> enumerate_triplets(const Eigen::MatrixXd& dist, int view) {
  const Index n = dist.rows();
  std::vector<TripletTerm> all;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      for (Index k = j + 1; k < n; ++k) {
        if (k == i) continue;
        const double d_ij = dist(i, j), d_ik = dist(i, k);
        if (std::abs(d_ij - d_ik) < kTieEps) continue;
        if (d_ij < d_ik) {
          all.emplace_back(i, j, k, view);
        } else {
          all.emplace_back(i, k, j, view);
        }
      }
    }
  }
  return all;
}

}  // namespace

std::vector<TripletTerm> sample_triplets(const Eigen::MatrixXd& dist, int view,
                                         Index count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample_triplets: count must be >= 1");
  if (dist.rows() != dist.cols()) throw ShapeError("sample_triplets: oracle not square");
  const Index n = dist.rows();
  if (n < 3) throw DataError("sample_triplets: need at least 3 objects");
  Rng rng(seed);

  // Small oracles: enumerate the valid set and draw without replacement.
  if (n <= 60) {
    std::vector<TripletTerm> all = enumerate_triplets(dist, view);
    if (count > static_cast<Index>(all.size())) {
      throw DataError("sample_triplets: oracle supplies only " + std::to_string(all.size()) +
                      " distinct triplets, " + std::to_string(count) + " requested");
    }
    rng.shuffle(all);
    all.resize(count);
    return all;
  }

  const double upper = static_cast<double>(n) * (n - 1) * (n - 2) / 2.0;
  if (static_cast<double>(count) > upper) {
    throw DataError("sample_triplets: request exceeds the number of index triples");
  }
  std::vector<TripletTerm> out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(2 * static_cast<std::size_t>(count));
  std::uint64_t failures = 0;
  const std::uint64_t failure_budget = 1000 + 200 * static_cast<std::uint64_t>(count);
  while (static_cast<Index>(out.size()) < count) {
    if (failures > failure_budget) {
      throw DataError("sample_triplets: could not draw enough distinct non-tied triplets");
    }
    const Index i = static_cast<Index>(rng.uniform_int(n));
    const Index j = static_cast<Index>(rng.uniform_int(n));
    const Index k = static_cast<Index>(rng.uniform_int(n));
    if (i == j || i == k || j == k) {
      ++failures;
      continue;
    }
    const double d_ij = dist(i, j), d_ik = dist(i, k);
    if (std::abs(d_ij - d_ik) < kTieEps) {
      ++failures;
      continue;
    }
    TripletTerm t = d_ij < d_ik ? TripletTerm(i, j, k, view) : TripletTerm(i, k, j, view);
    if (!seen.insert(triplet_key(n, t)).second) {
      ++failures;
      continue;
    }
    out.push_back(t);
  }
  return out;
}

std::vector<TripletTerm> partition_to_triplets(Index target,
                                               const std::vector<Index>& similar,
                                               const std::vector<Index>& dissimilar,
                                               int view) {
  std::unordered_set<Index> sim_set(similar.begin(), similar.end());
  std::unordered_set<Index> dis_set(dissimilar.begin(), dissimilar.end());
  if (sim_set.size() != similar.size() || dis_set.size() != dissimilar.size()) {
    throw DataError("partition_to_triplets: duplicate index within a partition set");
  }
  if (sim_set.count(target) || dis_set.count(target)) {
    throw DataError("partition_to_triplets: target appears in a partition set");
  }
  for (Index s : similar) {
    if (dis_set.count(s)) throw DataError("partition_to_triplets: partition sets overlap");
  }
  std::vector<TripletTerm> out;
  out.reserve(similar.size() * dissimilar.size());
  for (Index j : similar) {
    for (Index l : dissimilar) out.emplace_back(target, j, l, view);
  }
  return out;
}

TrainTestSplit split_train_test(const std::vector<std::vector<TripletTerm>>& views,
                                double test_fraction, std::uint64_t seed,
                                bool equalize_train) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw ConfigError("split_train_test: test_fraction must lie in (0, 1)");
  }
  TrainTestSplit split;
  split.train.resize(views.size());
  split.test.resize(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].empty()) {
      if (equalize_train) throw DataError("split_train_test: empty view with equalize set");
      continue;
    }
    std::vector<TripletTerm> shuffled = views[v];
    Rng rng(mix_seed(seed, v));
    rng.shuffle(shuffled);
    const auto n_test = static_cast<std::size_t>(test_fraction * shuffled.size());
    split.test[v].assign(shuffled.begin(), shuffled.begin() + n_test);
    split.train[v].assign(shuffled.begin() + n_test, shuffled.end());
  }
  if (equalize_train) {
    std::size_t min_train = SIZE_MAX;
    for (const auto& tr : split.train) min_train = std::min(min_train, tr.size());
    for (auto& tr : split.train) tr.resize(min_train);
  }
  return split;
}

}  // namespace mvml
