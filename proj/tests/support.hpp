#pragma once

// Shared fixtures: random matrices, TU-format writers and a small learnable
// synthetic dataset.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "simpool/graph.hpp"

namespace testsupport {

using simpool::Matrix;
using simpool::SparseMatrix;

inline Matrix random_symmetric(std::mt19937_64& rng, Eigen::Index n, double density, bool weighted = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (u(rng) < density) a(i, j) = a(j, i) = weighted ? 0.1 + u(rng) : 1.0;
    }
  }
  return a;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline SparseMatrix to_sparse(const Matrix& a) {
  SparseMatrix s = a.sparseView();
  s.makeCompressed();
  return s;
}

inline Matrix permutation_matrix(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

inline std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("simpool-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct TuGraph {
  int nodes = 0;
  std::vector<std::pair<int, int>> edges;  // 0-based, local
  int label = 0;
  std::vector<int> node_labels;  // optional
};

// Writes <dir>/<name>_*.txt in TU layout (1-based, global node ids).
inline void write_tu(const std::filesystem::path& dir, const std::string& name, const std::vector<TuGraph>& graphs) {
  std::filesystem::create_directories(dir);
  std::string a, gi, gl, nl;
  int offset = 0;
  bool any_node_labels = false;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const auto& tg = graphs[g];
    for (const auto& [u, v] : tg.edges) {
      a += std::to_string(offset + u + 1) + ", " + std::to_string(offset + v + 1) + "\n";
    }
    for (int i = 0; i < tg.nodes; ++i) gi += std::to_string(g + 1) + "\n";
    gl += std::to_string(tg.label) + "\n";
    if (!tg.node_labels.empty()) {
      any_node_labels = true;
      for (int l : tg.node_labels) nl += std::to_string(l) + "\n";
    }
    offset += tg.nodes;
  }
  write_text(dir / (name + "_A.txt"), a);
  write_text(dir / (name + "_graph_indicator.txt"), gi);
  write_text(dir / (name + "_graph_labels.txt"), gl);
  if (any_node_labels) write_text(dir / (name + "_node_labels.txt"), nl);
}

// Two-class toy problem: rings (label 1) versus dense random graphs (label 2),
// 6..10 nodes, node labels from degree parity.
inline std::vector<TuGraph> toy_tu_graphs(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(6, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TuGraph> out;
  for (std::size_t g = 0; g < count; ++g) {
    TuGraph tg;
    tg.nodes = size(rng);
    tg.label = static_cast<int>(g % 2) + 1;
    std::vector<int> degree(static_cast<std::size_t>(tg.nodes), 0);
    for (int i = 0; i < tg.nodes; ++i) {
      for (int j = i + 1; j < tg.nodes; ++j) {
        const bool ring = (j == i + 1) || (i == 0 && j == tg.nodes - 1);
        const bool edge = tg.label == 1 ? ring : (ring || u(rng) < 0.6);
        if (edge) {
          tg.edges.emplace_back(i, j);
          ++degree[static_cast<std::size_t>(i)];
          ++degree[static_cast<std::size_t>(j)];
        }
      }
    }
    for (int d : degree) tg.node_labels.push_back(d % 2);
    out.push_back(tg);
  }
  return out;
}

inline simpool::Dataset toy_dataset(std::size_t count, std::uint64_t seed) {
  TempDir dir;
  write_tu(dir.path(), "TOY", toy_tu_graphs(count, seed));
  return simpool::load_tu_dataset(dir.path(), "TOY");
}

}  // namespace testsupport
