#pragma once

// Structural similarity features: cosine similarity between columns of
// (A + lambda I)^p, plus the fixed-width top-k index encoding used to feed
// them to ordinary dense layers.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "simpool/graph.hpp"
#include "simpool/tensor.hpp"

namespace simpool::simfeat {

using IndexMatrix = ad::IndexMatrix;

struct SimilarityConfig {
  int p = 1;
  double lambda = 0.0;
  double alpha = 1.0;
  std::size_t k = 12;
  bool symmetric = true;

  void validate() const;  // throws ArgumentError
};

struct SimilarityFeatures {
  std::optional<Matrix> dense;         // |V| x |V|
  std::optional<SparseMatrix> sparse;  // same values, only geodesic <= 2 pairs stored
  std::optional<Matrix> mapped;        // |V| x k
  std::size_t source_node_count = 0;
  // Multiply-add count spent in the similarity kernel (dot products + norms).
  std::uint64_t multiply_adds = 0;

  // Dense view of whichever similarity representation is present.
  Matrix similarity() const;
};

SimilarityFeatures similarity_dense_symmetric(const Matrix& adjacency, const SimilarityConfig& cfg);
SimilarityFeatures similarity_dense_asymmetric(const Matrix& adjacency, const SimilarityConfig& cfg);

// p = 1 only. Visits, for every node, the neighbours of its neighbours and
// nothing else; all other pairs are exactly zero. Bit-identical to the dense
// symmetric path.
SimilarityFeatures similarity_sparse(const SparseMatrix& adjacency, const SimilarityConfig& cfg);

// Sparse path for symmetric graphs with p = 1, dense path otherwise.
SimilarityFeatures similarity_for_graph(const Graph& g, const SimilarityConfig& cfg);

// Column indices (0-based) of the k largest entries of each row, in
// descending value order with ties broken by ascending index. Columns past
// the row length are -1.
IndexMatrix rank_cols(const Matrix& c, std::size_t k);

// Mapped features computed by materialising the full |V| x |V| encoded
// matrix and gathering from it.
Matrix index_map_full(const Matrix& c, const SimilarityConfig& cfg);
// Same result, computed only at the selected indices.
Matrix index_map_efficient(const Matrix& c, const SimilarityConfig& cfg);

// Fills `mapped` from the dense or sparse similarity of `features`.
SimilarityFeatures index_map(SimilarityFeatures features, const SimilarityConfig& cfg);

struct DecodedIndex {
  std::size_t index = 0;  // 1-based node index
  // value * (|V|+1) landed on an integer: either alpha = 0, or the
  // alpha = 1, C = 1 collision where the decoded index is j + 1.
  bool boundary = false;
};

DecodedIndex decode_index(double value, std::size_t node_count);

// Differentiable similarity of a learned (pooled) adjacency, dense.
ad::Tensor similarity_tensor(const ad::Tensor& adjacency, const SimilarityConfig& cfg);
// Differentiable index map; the selected indices are constants of the tape.
ad::Tensor index_map_tensor(const ad::Tensor& c, const SimilarityConfig& cfg);

// Mapped features for every graph of a dataset.
std::vector<Matrix> compute_mapped_features(const Dataset& ds, const SimilarityConfig& cfg);

// File name (without directory) identifying a feature cache.
std::string cache_file_name(const Dataset& ds, const SimilarityConfig& cfg);

// SPF1 container: magic, then per graph node_count, k, row-major values.
void save_feature_cache(const std::filesystem::path& path, const std::vector<Matrix>& mapped);
std::vector<Matrix> load_feature_cache(const std::filesystem::path& path);

}  // namespace simpool::simfeat
