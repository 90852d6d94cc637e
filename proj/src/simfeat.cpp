#include "simpool/simfeat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "simpool/errors.hpp"
#include "simpool/io.hpp"

namespace simpool::simfeat {
namespace {

// Shared by the dense and sparse kernels so both produce identical bits.
inline double cosine(double dot, double norm_i, double norm_j) {
  if (norm_i == 0.0 || norm_j == 0.0) return 0.0;
  return std::clamp(dot / (norm_i * norm_j), -1.0, 1.0);
}

Matrix lifted_power(const Matrix& a, const SimilarityConfig& cfg) {
  Matrix lifted = a;
  lifted.diagonal().array() += cfg.lambda;
  Matrix out = lifted;
  for (int i = 1; i < cfg.p; ++i) out = (out * lifted).eval();
  return out;
}

void require_square(Eigen::Index rows, Eigen::Index cols) {
  if (rows != cols) throw ArgumentError("adjacency must be square");
  if (rows == 0) throw ArgumentError("adjacency must be non-empty");
}

inline double encode(double c, double alpha, Eigen::Index col, std::size_t n) {
  return (alpha * c + static_cast<double>(col + 1)) / static_cast<double>(n + 1);
}

struct Entry {
  Eigen::Index col;
  double value;
};

bool ranks_before(const Entry& a, const Entry& b) {
  if (a.value != b.value) return a.value > b.value;
  return a.col < b.col;
}

}  // namespace

void SimilarityConfig::validate() const {
  if (p < 1) throw ArgumentError("p must be >= 1");
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  if (k < 1) throw ArgumentError("k must be >= 1");
}

Matrix SimilarityFeatures::similarity() const {
  if (dense) return *dense;
  if (sparse) return Matrix(*sparse);
  throw ArgumentError("no similarity matrix present");
}

SimilarityFeatures similarity_dense_symmetric(const Matrix& adjacency, const SimilarityConfig& cfg) {
  cfg.validate();
  require_square(adjacency.rows(), adjacency.cols());
  if (adjacency != adjacency.transpose()) {
    throw ArgumentError("similarity_dense_symmetric: adjacency is not symmetric; use the asymmetric variant");
  }
  const Matrix lifted = lifted_power(adjacency, cfg);
  const auto n = lifted.rows();
  SimilarityFeatures out;
  out.source_node_count = static_cast<std::size_t>(n);

  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += lifted(k, i) * lifted(k, i);
    norms(i) = std::sqrt(s);
  }
  Matrix c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = norms(i) > 0.0 ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) dot += lifted(k, i) * lifted(k, j);
      c(i, j) = c(j, i) = cosine(dot, norms(i), norms(j));
    }
  }
  out.multiply_adds = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n) *
                      static_cast<std::uint64_t>(n + 1) / 2;
  out.dense = std::move(c);
  return out;
}

SimilarityFeatures similarity_dense_asymmetric(const Matrix& adjacency, const SimilarityConfig& cfg) {
  cfg.validate();
  require_square(adjacency.rows(), adjacency.cols());
  const Matrix lifted = lifted_power(adjacency, cfg);
  const auto n = lifted.rows();
  // Row i of concat(lifted, lifted^T) is (row_i(lifted), col_i(lifted)).
  Matrix wide(n, 2 * n);
  wide.leftCols(n) = lifted;
  wide.rightCols(n) = lifted.transpose();
  Eigen::VectorXd norms = wide.rowwise().norm();
  Matrix c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = norms(i) > 0.0 ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      c(i, j) = c(j, i) = cosine(wide.row(i).dot(wide.row(j)), norms(i), norms(j));
    }
  }
  SimilarityFeatures out;
  out.source_node_count = static_cast<std::size_t>(n);
  out.multiply_adds = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n) *
                      static_cast<std::uint64_t>(2 * n);
  out.dense = std::move(c);
  return out;
}

SimilarityFeatures similarity_sparse(const SparseMatrix& adjacency, const SimilarityConfig& cfg) {
  cfg.validate();
  if (cfg.p != 1) throw ArgumentError("similarity_sparse supports p = 1 only; use the dense path");
  require_square(adjacency.rows(), adjacency.cols());
  {
    SparseMatrix t = adjacency.transpose();
    if ((t - adjacency).norm() != 0.0) throw ArgumentError("similarity_sparse: adjacency is not symmetric");
  }
  const auto n = adjacency.rows();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(adjacency.nonZeros() + n));
  for (Eigen::Index r = 0; r < adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.value() < 0.0) throw ArgumentError("similarity_sparse: negative adjacency entry");
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  if (cfg.lambda != 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), cfg.lambda);
  }
  SparseMatrix lifted(n, n);
  lifted.setFromTriplets(trip.begin(), trip.end());
  lifted.makeCompressed();

  std::uint64_t work = 0;
  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(lifted, i); it; ++it) s += it.value() * it.value();
    norms(i) = std::sqrt(s);
    work += static_cast<std::uint64_t>(lifted.row(i).nonZeros());
  }

  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> touched;
  std::vector<Eigen::Triplet<double>> out_trip;
  for (Eigen::Index i = 0; i < n; ++i) {
    touched.clear();
    // Neighbours k of i in ascending order, then neighbours j of k: exactly
    // the pairs within geodesic distance 2. Each acc[j] receives its terms in
    // ascending k, matching the dense kernel's summation order.
    for (SparseMatrix::InnerIterator ik(lifted, i); ik; ++ik) {
      const auto k = ik.col();
      const double a_ik = ik.value();
      for (SparseMatrix::InnerIterator kj(lifted, k); kj; ++kj) {
        const auto j = kj.col();
        acc[static_cast<std::size_t>(j)] += a_ik * kj.value();
        if (!seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          touched.push_back(j);
        }
        ++work;
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto j : touched) {
      const auto sj = static_cast<std::size_t>(j);
      const double v = (j == i) ? (norms(i) > 0.0 ? 1.0 : 0.0) : cosine(acc[sj], norms(i), norms(j));
      if (v != 0.0) out_trip.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
      acc[sj] = 0.0;
      seen[sj] = 0;
    }
  }
  SparseMatrix c(n, n);
  c.setFromTriplets(out_trip.begin(), out_trip.end());
  c.makeCompressed();

  SimilarityFeatures out;
  out.source_node_count = static_cast<std::size_t>(n);
  out.multiply_adds = work;
  out.sparse = std::move(c);
  return out;
}

SimilarityFeatures similarity_for_graph(const Graph& g, const SimilarityConfig& cfg) {
  if (g.symmetric && cfg.p == 1) return similarity_sparse(g.adjacency, cfg);
  const Matrix a = g.dense_adjacency();
  return g.symmetric ? similarity_dense_symmetric(a, cfg) : similarity_dense_asymmetric(a, cfg);
}

IndexMatrix rank_cols(const Matrix& c, std::size_t k) {
  if (k < 1) throw ArgumentError("k must be >= 1");
  const auto n = c.cols();
  const auto take = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), n);
  IndexMatrix idx = IndexMatrix::Constant(c.rows(), static_cast<Eigen::Index>(k), -1);
  std::vector<Entry> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = {j, c(i, j)};
    std::partial_sort(row.begin(), row.begin() + take, row.end(), ranks_before);
    for (Eigen::Index t = 0; t < take; ++t) idx(i, t) = row[static_cast<std::size_t>(t)].col;
  }
  return idx;
}

Matrix index_map_full(const Matrix& c, const SimilarityConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(c.cols());
  Matrix encoded(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      encoded(i, j) = c(i, j) != 0.0 ? encode(c(i, j), cfg.alpha, j, n) : 0.0;
    }
  }
  const IndexMatrix idx = rank_cols(c, cfg.k);
  Matrix out = Matrix::Zero(c.rows(), static_cast<Eigen::Index>(cfg.k));
  for (Eigen::Index i = 0; i < idx.rows(); ++i) {
    for (Eigen::Index t = 0; t < idx.cols(); ++t) {
      if (idx(i, t) >= 0) out(i, t) = encoded(i, idx(i, t));
    }
  }
  return out;
}

Matrix index_map_efficient(const Matrix& c, const SimilarityConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(c.cols());
  const IndexMatrix idx = rank_cols(c, cfg.k);
  Matrix out = Matrix::Zero(c.rows(), static_cast<Eigen::Index>(cfg.k));
  for (Eigen::Index i = 0; i < idx.rows(); ++i) {
    for (Eigen::Index t = 0; t < idx.cols(); ++t) {
      const auto j = idx(i, t);
      if (j < 0) continue;
      const double s = c(i, j);
      // Zero source similarity means padding, independent of alpha.
      out(i, t) = s != 0.0 ? encode(s, cfg.alpha, j, n) : 0.0;
    }
  }
  return out;
}

SimilarityFeatures index_map(SimilarityFeatures features, const SimilarityConfig& cfg) {
  cfg.validate();
  if (features.dense) {
    features.mapped = index_map_efficient(*features.dense, cfg);
    return features;
  }
  if (!features.sparse) throw ArgumentError("index_map: no similarity matrix present");
  const SparseMatrix& c = *features.sparse;
  const auto n = static_cast<std::size_t>(c.cols());
  Matrix out = Matrix::Zero(c.rows(), static_cast<Eigen::Index>(cfg.k));
  std::vector<Entry> row;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    row.clear();
    for (SparseMatrix::InnerIterator it(c, i); it; ++it) {
      if (it.value() < 0.0) throw ArgumentError("index_map: sparse path requires non-negative similarity");
      if (it.value() != 0.0) row.push_back({it.col(), it.value()});
    }
    const auto take = std::min(row.size(), cfg.k);
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(), ranks_before);
    for (std::size_t t = 0; t < take; ++t) {
      out(i, static_cast<Eigen::Index>(t)) = encode(row[t].value, cfg.alpha, row[t].col, n);
    }
  }
  features.mapped = std::move(out);
  return features;
}

DecodedIndex decode_index(double value, std::size_t node_count) {
  if (!(value > 0.0 && value <= 1.0)) throw ArgumentError("decode_index: value outside (0, 1]");
  if (node_count == 0) throw ArgumentError("decode_index: node_count must be positive");
  const double scaled = value * static_cast<double>(node_count + 1);
  const double nearest = std::round(scaled);
  DecodedIndex out;
  if (std::abs(scaled - nearest) <= 1e-9 * static_cast<double>(node_count + 1)) {
    out.index = static_cast<std::size_t>(nearest);
    out.boundary = true;
  } else {
    out.index = static_cast<std::size_t>(std::floor(scaled));
  }
  return out;
}

ad::Tensor similarity_tensor(const ad::Tensor& adjacency, const SimilarityConfig& cfg) {
  cfg.validate();
  require_square(adjacency.rows(), adjacency.cols());
  ad::Tape& tape = *adjacency.tape();
  const auto n = adjacency.rows();
  ad::Tensor lifted = cfg.lambda != 0.0
                          ? ad::add(adjacency, tape.constant(cfg.lambda * Matrix::Identity(n, n)))
                          : adjacency;
  ad::Tensor powered = lifted;
  for (int i = 1; i < cfg.p; ++i) powered = ad::matmul(powered, lifted);
  // Rows of `vectors` are the vectors being compared.
  ad::Tensor vectors = cfg.symmetric ? ad::transpose(powered)
                                     : ad::concat_cols(powered, ad::transpose(powered));
  ad::Tensor unit = ad::mul(vectors, ad::safe_reciprocal(ad::l2_norm_rows(vectors)));
  return ad::matmul(unit, ad::transpose(unit));
}

ad::Tensor index_map_tensor(const ad::Tensor& c, const SimilarityConfig& cfg) {
  cfg.validate();
  ad::Tape& tape = *c.tape();
  const auto n = c.cols();
  const IndexMatrix idx = rank_cols(c.value(), cfg.k);
  IndexMatrix rows(idx.rows(), idx.cols());
  Matrix offsets = Matrix::Zero(idx.rows(), idx.cols());
  for (Eigen::Index i = 0; i < idx.rows(); ++i) {
    for (Eigen::Index t = 0; t < idx.cols(); ++t) {
      rows(i, t) = idx(i, t) >= 0 ? i : -1;
      if (idx(i, t) >= 0) offsets(i, t) = static_cast<double>(idx(i, t) + 1);
    }
  }
  ad::Tensor picked = ad::gather(c, rows, idx);
  Matrix padding = (picked.value().array() == 0.0).cast<double>();
  ad::Tensor encoded =
      ad::div_scalar(ad::add(ad::scale(picked, cfg.alpha), tape.constant(offsets)), static_cast<double>(n + 1));
  return ad::masked_fill(encoded, padding, 0.0);
}

std::vector<Matrix> compute_mapped_features(const Dataset& ds, const SimilarityConfig& cfg) {
  std::vector<Matrix> out;
  out.reserve(ds.graphs.size());
  for (const auto& g : ds.graphs) out.push_back(*index_map(similarity_for_graph(g, cfg), cfg).mapped);
  return out;
}

std::string cache_file_name(const Dataset& ds, const SimilarityConfig& cfg) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "-p%d-lam%.17g-a%.17g-k%zu%s.spf", cfg.p, cfg.lambda, cfg.alpha, cfg.k,
                cfg.symmetric ? "" : "-asym");
  return ds.name + "-" + ds.content_hash + buf;
}

void save_feature_cache(const std::filesystem::path& path, const std::vector<Matrix>& mapped) {
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, "SPF1");
  for (const auto& m : mapped) {
    io::write_u64(out, static_cast<std::uint64_t>(m.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_f64(out, m(i, j));
  }
  io::atomic_write(path, out.str());
}

std::vector<Matrix> load_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, "SPF1");
  std::vector<Matrix> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto rows = static_cast<Eigen::Index>(io::read_u64(in));
    const auto cols = static_cast<Eigen::Index>(io::read_u64(in));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = io::read_f64(in);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace simpool::simfeat
