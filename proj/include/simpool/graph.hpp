#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace simpool {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// One graph-classification example. Adjacency is kept coordinate-sparse so
// that large protein graphs do not cost |V|^2 memory.
struct Graph {
  std::size_t node_count = 0;
  SparseMatrix adjacency;
  Matrix node_features;  // node_count x d0
  std::size_t label = 0;
  bool symmetric = true;

  Matrix dense_adjacency() const { return Matrix(adjacency); }
  std::size_t edge_entries() const { return static_cast<std::size_t>(adjacency.nonZeros()); }
};

// Throws IntegrityError when a Graph invariant is violated.
void validate(const Graph& g);

enum class FeatureKind { NodeLabelOneHot, NormalisedDegree, Custom };

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  std::size_t num_classes = 0;
  FeatureKind feature_kind = FeatureKind::Custom;
  std::string content_hash;  // hex FNV-1a over the source files

  std::size_t feature_dim() const {
    return graphs.empty() ? 0 : static_cast<std::size_t>(graphs.front().node_features.cols());
  }
  double mean_node_count() const;
  double mean_edge_count() const;  // undirected edges, self loops counted once
};

void validate(const Dataset& ds);

// Reads a TU-format directory: <name>_A.txt, <name>_graph_indicator.txt,
// <name>_graph_labels.txt and optionally <name>_node_labels.txt.
Dataset load_tu_dataset(const std::filesystem::path& root, const std::string& name);

// SPG1 cache container.
void save_dataset_cache(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_cache(const std::filesystem::path& path);

// Graphs of one batch padded to the largest node count in the batch.
struct PaddedBatch {
  std::size_t max_nodes = 0;
  std::vector<SparseMatrix> adjacency;            // B x (N_max x N_max)
  std::vector<Matrix> features;                   // B x (N_max x d0)
  std::vector<Eigen::VectorXd> node_mask;         // B x N_max, 1 for real nodes
  std::vector<std::size_t> labels;
  std::vector<std::size_t> graph_indices;         // positions in the source Dataset
  std::vector<std::size_t> node_counts;

  std::size_t size() const { return labels.size(); }
};

PaddedBatch make_padded_batch(const Dataset& ds, const std::vector<std::size_t>& indices);

// Splits `indices` (all graphs when empty) into batches. With a seed the
// order is shuffled deterministically.
std::vector<PaddedBatch> make_batches(const Dataset& ds, std::size_t batch_size,
                                      std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                                      std::vector<std::size_t> indices = {});

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Label-stratified k-fold split.
std::vector<Fold> kfold_split(const Dataset& ds, std::size_t folds, std::uint64_t seed);

}  // namespace simpool
