#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simpool/graph.hpp"
#include "simpool/layers.hpp"
#include "simpool/simfeat.hpp"

namespace simpool {

struct GmnLayerSpec {
  std::size_t message = 0;
  std::size_t node = 0;
  nn::Activation activation = nn::Activation::Relu;
};

// Three-stage SimPool architecture. Widths are stored already scaled.
struct ModelConfig {
  std::string preset = "enzymes-paper";
  double scale = 1.0;

  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t embed0_encoder = 0;
  std::vector<GmnLayerSpec> embed0_propagations;
  std::size_t assign0_encoder = 0;
  std::vector<GmnLayerSpec> assign0_propagations;  // last node width == clusters1
  std::size_t gcn1 = 0;
  std::size_t assign1_hidden = 0;
  std::size_t gcn2 = 0;
  std::size_t clusters1 = 0;
  std::size_t clusters2 = 0;

  nn::AssignInputs assign_inputs = nn::AssignInputs::Structural;
  // Stage-1 assignment inputs; defaults to assign_inputs.
  std::optional<nn::AssignInputs> assign_inputs_l1;
  simfeat::SimilarityConfig sim;

  double w_e = 1.0;
  double w_c = 1.0;
  std::size_t epochs = 100;

  nn::AssignInputs stage1_inputs() const { return assign_inputs_l1.value_or(assign_inputs); }
  std::size_t structural_dim() const { return sim.k; }
  std::size_t embed0_out() const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

// Named presets: enzymes-paper, dd-paper (plus aliases enzymes, dd and
// enzymes-small / dd-small, which default to scale 0.125). Hidden widths are
// multiplied by `scale`; cluster counts and class counts are not.
ModelConfig preset_config(const std::string& name, std::optional<double> scale = std::nullopt);
std::vector<std::string> preset_names();

struct LossTerms {
  double task_loss = 0.0;
  std::array<double, 2> l_e{};  // per pooling layer
  std::array<double, 2> l_c{};  // uniformity deficit per pooling layer
  double weighted_total = 0.0;
};

struct GraphForward {
  ad::Tensor probabilities;                // 1 x classes
  std::array<ad::Tensor, 2> assignments;   // S^(0) (padded rows zero), S^(1)
  ad::Tensor task_loss;
  std::array<ad::Tensor, 2> l_e;
  std::array<ad::Tensor, 2> l_c;
  std::size_t node_count = 0;
};

struct BatchForward {
  std::vector<GraphForward> graphs;
  ad::Tensor total_loss;
  LossTerms terms;  // batch means
};

class SimPoolModel {
 public:
  SimPoolModel(ModelConfig cfg, std::uint64_t seed);
  SimPoolModel(const SimPoolModel&) = delete;
  SimPoolModel& operator=(const SimPoolModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  // One graph: adjacency/features may be padded, in which case `mask`
  // marks the real rows. `structural` is the mapped feature matrix (rows =
  // adjacency rows) or empty when the configuration does not use it.
  GraphForward forward_graph(ad::Tape& tape, const SparseMatrix& adjacency, const Matrix& features,
                             const Matrix* structural, const Eigen::VectorXd* mask, std::size_t label) const;

  // `mapped` is indexed by dataset graph index (may be empty when no stage
  // uses structural inputs at the input level).
  BatchForward forward(ad::Tape& tape, const PaddedBatch& batch, std::span<const Matrix> mapped) const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<SimPoolModel> load(const std::filesystem::path& path);
  void copy_parameters_from(const SimPoolModel& other);

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  nn::PoolingBlock block0_;
  nn::PoolingBlock block1_;
  nn::Gcn gcn2_;
  nn::Dense classifier_;
};

BatchForward model_forward(ad::Tape& tape, const SimPoolModel& model, const PaddedBatch& batch,
                           std::span<const Matrix> mapped);

// Number of distinct argmax clusters over the real rows of S.
std::size_t distinct_clusters(const Matrix& s, std::size_t real_rows);
std::vector<std::size_t> argmax_rows(const Matrix& s, std::size_t real_rows);

}  // namespace simpool
