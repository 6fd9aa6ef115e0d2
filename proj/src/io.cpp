#include "mvml/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "mvml/common.hpp"

namespace mvml {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line_no,
                            const std::string& why) {
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
}

bool is_skippable(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  auto out = open_out(path);
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << m(r, c);
    }
    out << '\n';
  }
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  Index rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) {
    malformed(path, 1, "expected `rows cols` header");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) {
        malformed(path, static_cast<std::size_t>(r + 2), "missing or non-numeric value");
      }
    }
  }
  return m;
}

void save_triplets(const std::filesystem::path& path,
                   const std::vector<std::vector<TripletTerm>>& views) {
  auto out = open_out(path);
  out << "# view\ti\tj\tk\n";
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (const auto& t : views[v]) {
      out << v << '\t' << t.i << '\t' << t.j << '\t' << t.k << '\n';
    }
  }
}

std::vector<std::vector<TripletTerm>> load_triplets(const std::filesystem::path& path,
                                                    Index expected_objects) {
  auto in = open_in(path);
  std::vector<std::vector<TripletTerm>> views;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    std::istringstream ss(line);
    long long v, i, j, k;
    if (!(ss >> v >> i >> j >> k)) malformed(path, line_no, "expected `view i j k`");
    std::string extra;
    if (ss >> extra) malformed(path, line_no, "trailing fields");
    if (v < 0) malformed(path, line_no, "negative view id");
    if (i < 0 || j < 0 || k < 0) malformed(path, line_no, "negative object index");
    if (i == j || i == k || j == k) malformed(path, line_no, "repeated index in triplet");
    if (expected_objects > 0 &&
        (i >= expected_objects || j >= expected_objects || k >= expected_objects)) {
      malformed(path, line_no, "object index out of range");
    }
    if (static_cast<std::size_t>(v) >= views.size()) views.resize(v + 1);
    views[v].emplace_back(i, j, k, static_cast<int>(v));
  }
  return views;
}

void save_features(const std::filesystem::path& path, const Eigen::MatrixXd& X) {
  auto out = open_out(path);
  out << X.rows() << '\t' << X.cols() << '\n';
  for (Index r = 0; r < X.rows(); ++r) {
    for (Index c = 0; c < X.cols(); ++c) {
      if (c) out << '\t';
      out << X(r, c);
    }
    out << '\n';
  }
}

Eigen::MatrixXd load_features(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  Index n = -1, h = -1;
  Eigen::MatrixXd X;
  Index row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    std::istringstream ss(line);
    if (n < 0) {
      if (!(ss >> n >> h) || n < 0 || h < 1) malformed(path, line_no, "expected `N H` header");
      X.resize(n, h);
      continue;
    }
    if (row >= n) malformed(path, line_no, "more rows than declared");
    for (Index c = 0; c < h; ++c) {
      if (!(ss >> X(row, c))) malformed(path, line_no, "missing or non-numeric value");
    }
    std::string extra;
    if (ss >> extra) malformed(path, line_no, "trailing fields");
    ++row;
  }
  if (n < 0) malformed(path, line_no ? line_no : 1, "empty feature file");
  if (row != n) {
    throw DataError(path.string() + ": declared " + std::to_string(n) + " rows, found " +
                    std::to_string(row));
  }
  return X;
}

void save_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> labels;
  std::vector<bool> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    std::istringstream ss(line);
    long long idx, label;
    if (!(ss >> idx >> label)) malformed(path, line_no, "expected `index label`");
    if (idx < 0) malformed(path, line_no, "negative object index");
    const auto u = static_cast<std::size_t>(idx);
    if (u >= labels.size()) {
      labels.resize(u + 1, 0);
      seen.resize(u + 1, false);
    }
    if (seen[u]) malformed(path, line_no, "duplicate object index");
    labels[u] = static_cast<int>(label);
    seen[u] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DataError(path.string() + ": missing label for object " + std::to_string(i));
  }
  return labels;
}

}  // namespace mvml
