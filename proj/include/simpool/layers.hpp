#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "simpool/graph.hpp"
#include "simpool/tensor.hpp"

namespace simpool::nn {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;

enum class Activation { Linear, Relu };

// Owns every trainable tensor of a model; addresses are stable.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix value);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  Parameter* find(const std::string& name);
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

// y = act(x W + b)
struct Dense {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out
  Activation activation = Activation::Linear;

  static Dense create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      Activation act, std::mt19937_64& rng);
  Tensor forward(Tape& tape, const Tensor& x) const;
  std::size_t in_dim() const { return static_cast<std::size_t>(weight->value.rows()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight->value.cols()); }
};

struct Mlp {
  std::vector<Dense> layers;
  Tensor forward(Tape& tape, const Tensor& x) const;
};

// Edge list view of a constant adjacency: edge e carries a message from
// source[e] to target[e], weighted by A(source, target).
struct EdgeIndex {
  std::vector<Eigen::Index> source;
  std::vector<Eigen::Index> target;
  SparseMatrix aggregate;  // n x E, aggregate(target[e], e) = weight[e]
  Eigen::Index nodes = 0;

  static EdgeIndex from_adjacency(const SparseMatrix& a);
};

// Adjacency of one pooling level: a constant sparse matrix for input
// graphs, a dense tape tensor once it has been learned by pooling.
class GraphInput {
 public:
  static GraphInput constant(const SparseMatrix& a);
  static GraphInput learned(const Tensor& a);

  Eigen::Index nodes() const;
  bool is_constant() const { return sparse_ != nullptr; }
  const SparseMatrix& sparse() const { return *sparse_; }
  const EdgeIndex& edges() const;
  Tensor dense(Tape& tape) const;
  // S^T A S
  Tensor coarsen(Tape& tape, const Tensor& s) const;

 private:
  std::shared_ptr<const SparseMatrix> sparse_;
  std::shared_ptr<const EdgeIndex> edges_;
  std::optional<Tensor> dense_;
};

// Per-node MLP (no cross-node mixing).
struct GmnEncoder {
  Dense node;
  Tensor forward(Tape& tape, const Tensor& x) const { return node.forward(tape, x); }
};

// m_{j->i} = f_message(h_i, h_j) for every edge j->i, weighted by A_ji;
// h'_i = f_node(h_i, sum_j m_{j->i}).
struct GmnPropagation {
  Dense message;  // 2h -> m
  Dense node;     // h + m -> out
  Tensor forward(Tape& tape, const Tensor& h, const EdgeIndex& edges) const;
};

// act(D^-1/2 (A + I) D^-1/2 H W), D the row sums of A + I.
struct Gcn {
  Parameter* weight = nullptr;
  Activation activation = Activation::Relu;

  static Gcn create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                    Activation act, std::mt19937_64& rng);
  Tensor forward(Tape& tape, const Tensor& h, const Tensor& adjacency) const;
  std::size_t out_dim() const { return static_cast<std::size_t>(weight->value.cols()); }
};

Tensor gmn_encode(Tape& tape, const Tensor& x, const GmnEncoder& enc);
Tensor gmn_propagate(Tape& tape, const Tensor& h, const SparseMatrix& adjacency, const GmnPropagation& prop);
Tensor gcn_forward(Tape& tape, const Tensor& h, const Tensor& adjacency, const Gcn& gcn);

// A node-level network used inside a pooling block.
class NodeNet {
 public:
  virtual ~NodeNet() = default;
  virtual Tensor forward(Tape& tape, const GraphInput& a, const Tensor& x) const = 0;
  virtual std::size_t output_dim() const = 0;
};

class GmnStack final : public NodeNet {
 public:
  GmnEncoder encoder;
  std::vector<GmnPropagation> propagations;
  Tensor forward(Tape& tape, const GraphInput& a, const Tensor& x) const override;
  std::size_t output_dim() const override;
};

class GcnNet final : public NodeNet {
 public:
  Gcn gcn;
  Tensor forward(Tape& tape, const GraphInput& a, const Tensor& x) const override;
  std::size_t output_dim() const override { return gcn.out_dim(); }
};

class MlpNet final : public NodeNet {
 public:
  Mlp mlp;
  Tensor forward(Tape& tape, const GraphInput& a, const Tensor& x) const override;
  std::size_t output_dim() const override { return mlp.layers.back().out_dim(); }
};

enum class AssignInputs { Structural, Node, Both };

std::string to_string(AssignInputs a);
AssignInputs parse_assign_inputs(const std::string& s);

struct PoolOutput {
  Tensor x_next;  // S^T Z
  Tensor a_next;  // tanh(S^T A S)
  Tensor s;       // row-softmax assignment, masked rows zero
};

struct PoolingBlock {
  std::unique_ptr<NodeNet> embed_net;
  std::unique_ptr<NodeNet> assign_net;
  std::size_t clusters_out = 0;
  AssignInputs assign_inputs = AssignInputs::Structural;

  // `mask` (n x 1, 1 = real node) zeroes padding rows of Z and S.
  PoolOutput forward(Tape& tape, const GraphInput& a, const Tensor& x,
                     const std::optional<Tensor>& structural, const Matrix* mask = nullptr) const;
};

// Pooling given an explicit embedding Z and pre-softmax assignment logits.
PoolOutput pool_forward(Tape& tape, const GraphInput& a, const Tensor& z, const Tensor& s_logits,
                        std::size_t clusters_out, const Matrix* mask = nullptr);

inline constexpr double kProbabilityFloor = 1e-12;

Tensor row_entropy(const Tensor& p);
// (1/n) sum_i H(row_i(S)); n defaults to the row count.
Tensor loss_le(const Tensor& s, std::optional<double> node_count = std::nullopt);
// ln(n_{l+1}) - H(1^T S / n_l).
Tensor loss_lc(const Tensor& s, std::optional<double> node_count = std::nullopt);

}  // namespace simpool::nn
