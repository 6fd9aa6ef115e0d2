#include "mvml/procrustes.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mvml/parallel.hpp"

namespace mvml {

namespace {

Eigen::MatrixXd centered(const Eigen::MatrixXd& pts) {
  return pts.rowwise() - pts.colwise().mean();
}

bool degenerate(double centered_sq_norm, const Eigen::MatrixXd& pts) {
  return centered_sq_norm < 1e-18 * std::max(1.0, pts.squaredNorm());
}

}  // namespace

double procrustes_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("procrustes_residual: landmark sets differ in shape");
  }
  if (a.rows() < 2) throw ShapeError("procrustes_residual: need at least 2 landmarks");
  const Eigen::MatrixXd ac = centered(a);
  const Eigen::MatrixXd bc = centered(b);
  const double bn = bc.squaredNorm();
  if (degenerate(bn, b)) throw DataError("procrustes_residual: degenerate shape (all points equal)");
  const double s = std::max(0.0, (ac.array() * bc.array()).sum() / bn);
  return (ac - s * bc).squaredNorm();
}

Eigen::MatrixXd landmark_distance_matrix(const LandmarkSet& set,
                                         const std::vector<Index>& landmarks,
                                         int threads) {
  const Index n = set.num_objects();
  const Index p = set.num_landmarks();
  if (landmarks.empty()) throw ConfigError("landmark view subset is empty");
  for (Index l : landmarks) {
    if (l < 0 || l >= p) throw ConfigError("landmark index out of range");
  }
  std::vector<Eigen::MatrixXd> sub(n);
  std::vector<double> norms(n);
  for (Index o = 0; o < n; ++o) {
    Eigen::MatrixXd pts(landmarks.size(), 2);
    for (std::size_t r = 0; r < landmarks.size(); ++r) pts.row(r) = set.objects[o].row(landmarks[r]);
    sub[o] = centered(pts);
    norms[o] = sub[o].squaredNorm();
    if (degenerate(norms[o], pts)) {
      throw DataError("landmark_distance_matrix: degenerate shape for object " + std::to_string(o));
    }
  }
  // Normalized residual 1 - max(cos, 0)^2 with cos the centered correlation;
  // every term is symmetric in (i, j), so the matrix is symmetric bit-exactly.
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  parallel_for(0, n, threads, [&](std::ptrdiff_t i) {
    for (Index j = 0; j < i; ++j) {
      const double dot = (sub[i].array() * sub[j].array()).sum();
      double w = 1.0;
      if (dot > 0.0) w = std::max(0.0, 1.0 - dot * dot / (norms[i] * norms[j]));
      dist(i, j) = w;
      dist(j, i) = w;
    }
  });
  return dist;
}

std::vector<LandmarkView> default_landmark_views() {
  auto range = [](Index lo, Index hi) {
    std::vector<Index> v;
    for (Index i = lo; i <= hi; ++i) v.push_back(i);
    return v;
  };
  std::vector<LandmarkView> views;
  views.push_back({"all", range(0, 15)});
  views.push_back({"back", {0, 1, 2, 3, 15}});
  views.push_back({"nose", {6, 7, 8}});
  LandmarkView back_wings{"back_wings", range(0, 5)};
  for (Index i = 9; i <= 15; ++i) back_wings.landmarks.push_back(i);
  views.push_back(back_wings);
  views.push_back({"nose_wings", range(4, 14)});
  return views;
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  std::map<Index, std::map<Index, Eigen::Vector2d>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    std::istringstream ss(line);
    long long obj, lm;
    double x, y;
    if (!(ss >> obj >> lm >> x >> y) || obj < 0 || lm < 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected `object landmark x y`");
    }
    if (!rows[obj].emplace(lm, Eigen::Vector2d(x, y)).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate landmark");
    }
  }
  if (rows.empty()) throw DataError(path.string() + ": no landmarks");
  const auto p = static_cast<Index>(rows.begin()->second.size());
  LandmarkSet set;
  Index expect = 0;
  for (const auto& [obj, lms] : rows) {
    if (obj != expect++) throw DataError(path.string() + ": object ids must be contiguous from 0");
    if (static_cast<Index>(lms.size()) != p || lms.rbegin()->first != p - 1) {
      throw DataError(path.string() + ": object " + std::to_string(obj) +
                      " does not carry landmarks 0.." + std::to_string(p - 1));
    }
    Eigen::MatrixXd pts(p, 2);
    for (const auto& [lm, xy] : lms) pts.row(lm) = xy.transpose();
    set.objects.push_back(std::move(pts));
  }
  return set;
}

void save_landmarks(const std::filesystem::path& path, const LandmarkSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  for (Index o = 0; o < set.num_objects(); ++o) {
    for (Index l = 0; l < set.num_landmarks(); ++l) {
      out << o << '\t' << l << '\t' << set.objects[o](l, 0) << '\t' << set.objects[o](l, 1) << '\n';
    }
  }
}

std::vector<LandmarkView> load_landmark_views(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!j.contains("views") || !j["views"].is_array()) {
    throw DataError(path.string() + ": expected a top-level `views` array");
  }
  std::vector<LandmarkView> views;
  for (const auto& jv : j["views"]) {
    LandmarkView v;
    v.name = jv.value("name", "view" + std::to_string(views.size()));
    for (const auto& idx : jv.at("landmarks")) v.landmarks.push_back(idx.get<Index>());
    if (v.landmarks.empty()) throw DataError(path.string() + ": view with no landmarks");
    views.push_back(std::move(v));
  }
  if (views.empty()) throw DataError(path.string() + ": no views");
  return views;
}

void save_landmark_views(const std::filesystem::path& path,
                         const std::vector<LandmarkView>& views) {
  nlohmann::json j;
  j["views"] = nlohmann::json::array();
  for (const auto& v : views) {
    j["views"].push_back({{"name", v.name}, {"landmarks", v.landmarks}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mvml
