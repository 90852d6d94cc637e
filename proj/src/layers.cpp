#include "simpool/layers.hpp"

#include <cmath>

#include "simpool/errors.hpp"

namespace simpool::nn {
namespace {

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::Relu ? ad::relu(x) : x;
}

Matrix glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  return w;
}

Tensor masked(Tape& tape, const Tensor& x, const Matrix* mask) {
  if (!mask) return x;
  if (mask->rows() != x.rows()) throw ArgumentError("mask length does not match node count");
  return ad::mul(x, tape.constant(*mask));
}

}  // namespace

// --- ParameterStore ------------------------------------------------------------

Parameter& ParameterStore::add(std::string name, Matrix value) {
  if (find(name)) throw ArgumentError("duplicate parameter name " + name);
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// --- Dense / Mlp ------------------------------------------------------------------

Dense Dense::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                    Activation act, std::mt19937_64& rng) {
  Dense d;
  d.weight = &store.add(name + ".weight", glorot(in, out, rng));
  d.bias = &store.add(name + ".bias", Matrix::Zero(1, static_cast<Eigen::Index>(out)));
  d.activation = act;
  return d;
}

Tensor Dense::forward(Tape& tape, const Tensor& x) const {
  if (static_cast<std::size_t>(x.cols()) != in_dim()) {
    throw ArgumentError("dense layer " + weight->name + ": input width " + std::to_string(x.cols()) +
                        ", expected " + std::to_string(in_dim()));
  }
  Tensor y = ad::add(ad::matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
  return activate(y, activation);
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers) h = layer.forward(tape, h);
  return h;
}

// --- graph structure ----------------------------------------------------------------

EdgeIndex EdgeIndex::from_adjacency(const SparseMatrix& a) {
  if (a.rows() != a.cols()) throw ArgumentError("adjacency must be square");
  EdgeIndex e;
  e.nodes = a.rows();
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
      if (it.value() < 0.0) throw ArgumentError("negative adjacency entry");
      if (it.value() == 0.0) continue;
      const auto id = static_cast<int>(e.source.size());
      e.source.push_back(it.row());
      e.target.push_back(it.col());
      trip.emplace_back(static_cast<int>(it.col()), id, it.value());
    }
  }
  e.aggregate.resize(e.nodes, static_cast<Eigen::Index>(e.source.size()));
  e.aggregate.setFromTriplets(trip.begin(), trip.end());
  e.aggregate.makeCompressed();
  return e;
}

GraphInput GraphInput::constant(const SparseMatrix& a) {
  GraphInput g;
  g.sparse_ = std::make_shared<const SparseMatrix>(a);
  g.edges_ = std::make_shared<const EdgeIndex>(EdgeIndex::from_adjacency(a));
  return g;
}

GraphInput GraphInput::learned(const Tensor& a) {
  if (a.rows() != a.cols()) throw ArgumentError("adjacency must be square");
  GraphInput g;
  g.dense_ = a;
  return g;
}

Eigen::Index GraphInput::nodes() const { return sparse_ ? sparse_->rows() : dense_->rows(); }

const EdgeIndex& GraphInput::edges() const {
  if (!edges_) throw ArgumentError("edge index requested for a learned adjacency");
  return *edges_;
}

Tensor GraphInput::dense(Tape& tape) const {
  if (dense_) return *dense_;
  return tape.constant(Matrix(*sparse_));
}

Tensor GraphInput::coarsen(Tape& tape, const Tensor& s) const {
  if (s.rows() != nodes()) throw ArgumentError("assignment rows do not match node count");
  const Tensor st = ad::transpose(s);
  if (sparse_) return ad::matmul(st, ad::spmm(*sparse_, s));
  (void)tape;
  return ad::matmul(st, ad::matmul(*dense_, s));
}

// --- GMN / GCN ------------------------------------------------------------------------

Tensor GmnPropagation::forward(Tape& tape, const Tensor& h, const EdgeIndex& edges) const {
  if (h.rows() != edges.nodes) throw ArgumentError("node state rows do not match adjacency dimension");
  const auto width = static_cast<Eigen::Index>(message.out_dim());
  Tensor aggregate;
  if (edges.source.empty()) {
    aggregate = tape.constant(Matrix::Zero(h.rows(), width));
  } else {
    const Tensor receiver = ad::gather_rows(h, edges.target);
    const Tensor sender = ad::gather_rows(h, edges.source);
    const Tensor messages = message.forward(tape, ad::concat_cols(receiver, sender));
    aggregate = ad::spmm(edges.aggregate, messages);
  }
  return node.forward(tape, ad::concat_cols(h, aggregate));
}

Gcn Gcn::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                Activation act, std::mt19937_64& rng) {
  Gcn g;
  g.weight = &store.add(name + ".weight", glorot(in, out, rng));
  g.activation = act;
  return g;
}

Tensor Gcn::forward(Tape& tape, const Tensor& h, const Tensor& adjacency) const {
  const auto n = adjacency.rows();
  if (adjacency.cols() != n) throw ArgumentError("gcn: adjacency must be square");
  if (h.rows() != n) throw ArgumentError("gcn: node state rows do not match adjacency");
  if ((adjacency.value().array() < 0.0).any()) throw ArgumentError("gcn: negative adjacency entry");
  const Tensor lifted = ad::add(adjacency, tape.constant(Matrix::Identity(n, n)));
  const Tensor inv_sqrt_deg = ad::pow_scalar(ad::row_sum(lifted), -0.5);
  const Tensor normalised = ad::mul(ad::mul(lifted, inv_sqrt_deg), ad::transpose(inv_sqrt_deg));
  return activate(ad::matmul(normalised, ad::matmul(h, tape.parameter(*weight))), activation);
}

Tensor gmn_encode(Tape& tape, const Tensor& x, const GmnEncoder& enc) { return enc.forward(tape, x); }

Tensor gmn_propagate(Tape& tape, const Tensor& h, const SparseMatrix& adjacency, const GmnPropagation& prop) {
  if (adjacency.rows() != adjacency.cols()) throw ArgumentError("gmn_propagate: adjacency must be square");
  return prop.forward(tape, h, EdgeIndex::from_adjacency(adjacency));
}

Tensor gcn_forward(Tape& tape, const Tensor& h, const Tensor& adjacency, const Gcn& gcn) {
  return gcn.forward(tape, h, adjacency);
}

// --- node nets ----------------------------------------------------------------------------

Tensor GmnStack::forward(Tape& tape, const GraphInput& a, const Tensor& x) const {
  if (!a.is_constant()) throw ArgumentError("GMN stack runs on input graphs only");
  Tensor h = encoder.forward(tape, x);
  for (const auto& prop : propagations) h = prop.forward(tape, h, a.edges());
  return h;
}

std::size_t GmnStack::output_dim() const {
  return propagations.empty() ? encoder.node.out_dim() : propagations.back().node.out_dim();
}

Tensor GcnNet::forward(Tape& tape, const GraphInput& a, const Tensor& x) const {
  return gcn.forward(tape, x, a.dense(tape));
}

Tensor MlpNet::forward(Tape& tape, const GraphInput&, const Tensor& x) const { return mlp.forward(tape, x); }

std::string to_string(AssignInputs a) {
  switch (a) {
    case AssignInputs::Structural: return "structural";
    case AssignInputs::Node: return "node";
    case AssignInputs::Both: return "both";
  }
  return "?";
}

AssignInputs parse_assign_inputs(const std::string& s) {
  if (s == "structural") return AssignInputs::Structural;
  if (s == "node") return AssignInputs::Node;
  if (s == "both") return AssignInputs::Both;
  throw ArgumentError("unknown assignment inputs '" + s + "' (structural|node|both)");
}

// --- pooling --------------------------------------------------------------------------------

PoolOutput pool_forward(Tape& tape, const GraphInput& a, const Tensor& z, const Tensor& s_logits,
                        std::size_t clusters_out, const Matrix* mask) {
  if (static_cast<std::size_t>(s_logits.cols()) != clusters_out) {
    throw ArgumentError("assignment width " + std::to_string(s_logits.cols()) + " != cluster count " +
                        std::to_string(clusters_out));
  }
  if (z.rows() != a.nodes() || s_logits.rows() != a.nodes()) {
    throw ArgumentError("pool_forward: row counts do not match node count");
  }
  PoolOutput out;
  out.s = masked(tape, ad::softmax_rows(s_logits), mask);
  const Tensor zm = masked(tape, z, mask);
  out.x_next = ad::matmul(ad::transpose(out.s), zm);
  out.a_next = ad::tanh(a.coarsen(tape, out.s));
  return out;
}

PoolOutput PoolingBlock::forward(Tape& tape, const GraphInput& a, const Tensor& x,
                                 const std::optional<Tensor>& structural, const Matrix* mask) const {
  Tensor features;
  switch (assign_inputs) {
    case AssignInputs::Node:
      features = x;
      break;
    case AssignInputs::Structural:
    case AssignInputs::Both:
      if (!structural) throw ConfigError("assignment requires structural features but none were supplied");
      features = assign_inputs == AssignInputs::Both ? ad::concat_cols(*structural, x) : *structural;
      break;
  }
  const Tensor z = embed_net->forward(tape, a, x);
  const Tensor logits = assign_net->forward(tape, a, features);
  return pool_forward(tape, a, z, logits, clusters_out, mask);
}

// --- regularisers --------------------------------------------------------------------------------

Tensor row_entropy(const Tensor& p) {
  return ad::scale(ad::row_sum(ad::mul(p, ad::log(ad::clamp_min(p, kProbabilityFloor)))), -1.0);
}

Tensor loss_le(const Tensor& s, std::optional<double> node_count) {
  const double n = node_count.value_or(static_cast<double>(s.rows()));
  return ad::scale(ad::sum(row_entropy(s)), 1.0 / n);
}

Tensor loss_lc(const Tensor& s, std::optional<double> node_count) {
  const double n = node_count.value_or(static_cast<double>(s.rows()));
  const Tensor q = ad::scale(ad::col_sum(s), 1.0 / n);
  const Tensor h = ad::sum(row_entropy(q));
  return ad::add_scalar(ad::scale(h, -1.0), std::log(static_cast<double>(s.cols())));
}

}  // namespace simpool::nn
