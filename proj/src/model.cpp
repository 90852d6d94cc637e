#include "simpool/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "simpool/errors.hpp"
#include "simpool/io.hpp"

namespace simpool {
namespace {

std::size_t scaled(std::size_t width, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale)));
}

std::string act_name(nn::Activation a) { return a == nn::Activation::Relu ? "relu" : "linear"; }

nn::Activation parse_act(const std::string& s) {
  if (s == "relu") return nn::Activation::Relu;
  if (s == "linear") return nn::Activation::Linear;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string specs_to_text(const std::vector<GmnLayerSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    if (!out.empty()) out += ",";
    out += std::to_string(s.message) + ":" + std::to_string(s.node) + ":" + act_name(s.activation);
  }
  return out;
}

std::vector<GmnLayerSpec> specs_from_text(const std::string& text) {
  std::vector<GmnLayerSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw ConfigError("bad GMN layer spec '" + item + "'");
    out.push_back({std::stoul(item.substr(0, a)), std::stoul(item.substr(a + 1, b - a - 1)),
                   parse_act(item.substr(b + 1))});
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nn::GmnStack build_gmn(nn::ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t encoder_width, const std::vector<GmnLayerSpec>& props,
                       std::mt19937_64& rng) {
  nn::GmnStack stack;
  stack.encoder.node = nn::Dense::create(store, name + ".encoder", in, encoder_width, nn::Activation::Relu, rng);
  std::size_t h = encoder_width;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const auto& spec = props[i];
    const std::string prefix = name + ".prop" + std::to_string(i);
    nn::GmnPropagation p;
    p.message = nn::Dense::create(store, prefix + ".message", 2 * h, spec.message, spec.activation, rng);
    p.node = nn::Dense::create(store, prefix + ".node", h + spec.message, spec.node, spec.activation, rng);
    stack.propagations.push_back(p);
    h = spec.node;
  }
  return stack;
}

std::size_t assign_input_dim(nn::AssignInputs inputs, std::size_t structural, std::size_t node) {
  switch (inputs) {
    case nn::AssignInputs::Structural: return structural;
    case nn::AssignInputs::Node: return node;
    case nn::AssignInputs::Both: return structural + node;
  }
  return 0;
}

bool uses_structural(nn::AssignInputs a) { return a != nn::AssignInputs::Node; }

}  // namespace

// --- config ------------------------------------------------------------------------

std::size_t ModelConfig::embed0_out() const {
  return embed0_propagations.empty() ? embed0_encoder : embed0_propagations.back().node;
}

std::string ModelConfig::to_text() const {
  std::ostringstream o;
  o << "preset=" << preset << "\n"
    << "scale=" << fmt_double(scale) << "\n"
    << "input_dim=" << input_dim << "\n"
    << "num_classes=" << num_classes << "\n"
    << "embed0_encoder=" << embed0_encoder << "\n"
    << "embed0_propagations=" << specs_to_text(embed0_propagations) << "\n"
    << "assign0_encoder=" << assign0_encoder << "\n"
    << "assign0_propagations=" << specs_to_text(assign0_propagations) << "\n"
    << "gcn1=" << gcn1 << "\n"
    << "assign1_hidden=" << assign1_hidden << "\n"
    << "gcn2=" << gcn2 << "\n"
    << "clusters1=" << clusters1 << "\n"
    << "clusters2=" << clusters2 << "\n"
    << "assign=" << nn::to_string(assign_inputs) << "\n"
    << "assign_l1=" << nn::to_string(stage1_inputs()) << "\n"
    << "p=" << sim.p << "\n"
    << "lambda=" << fmt_double(sim.lambda) << "\n"
    << "alpha=" << fmt_double(sim.alpha) << "\n"
    << "k=" << sim.k << "\n"
    << "symmetric=" << (sim.symmetric ? 1 : 0) << "\n"
    << "w_e=" << fmt_double(w_e) << "\n"
    << "w_c=" << fmt_double(w_c) << "\n"
    << "epochs=" << epochs << "\n";
  return o.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad model config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError("model config missing key '" + k + "'");
    return it->second;
  };
  ModelConfig c;
  c.preset = get("preset");
  c.scale = std::stod(get("scale"));
  c.input_dim = std::stoul(get("input_dim"));
  c.num_classes = std::stoul(get("num_classes"));
  c.embed0_encoder = std::stoul(get("embed0_encoder"));
  c.embed0_propagations = specs_from_text(get("embed0_propagations"));
  c.assign0_encoder = std::stoul(get("assign0_encoder"));
  c.assign0_propagations = specs_from_text(get("assign0_propagations"));
  c.gcn1 = std::stoul(get("gcn1"));
  c.assign1_hidden = std::stoul(get("assign1_hidden"));
  c.gcn2 = std::stoul(get("gcn2"));
  c.clusters1 = std::stoul(get("clusters1"));
  c.clusters2 = std::stoul(get("clusters2"));
  c.assign_inputs = nn::parse_assign_inputs(get("assign"));
  c.assign_inputs_l1 = nn::parse_assign_inputs(get("assign_l1"));
  c.sim.p = std::stoi(get("p"));
  c.sim.lambda = std::stod(get("lambda"));
  c.sim.alpha = std::stod(get("alpha"));
  c.sim.k = std::stoul(get("k"));
  c.sim.symmetric = get("symmetric") != "0";
  c.w_e = std::stod(get("w_e"));
  c.w_c = std::stod(get("w_c"));
  c.epochs = std::stoul(get("epochs"));
  return c;
}

std::vector<std::string> preset_names() {
  return {"enzymes-paper", "dd-paper", "enzymes", "dd", "enzymes-small", "dd-small"};
}

ModelConfig preset_config(const std::string& name, std::optional<double> scale) {
  using nn::Activation;
  ModelConfig c;
  double default_scale = 1.0;
  std::string base = name;
  if (name == "enzymes") base = "enzymes-paper";
  if (name == "dd") base = "dd-paper";
  if (name == "enzymes-small") base = "enzymes-paper", default_scale = 0.125;
  if (name == "dd-small") base = "dd-paper", default_scale = 0.125;
  const double s = scale.value_or(default_scale);
  if (!(s > 0.0)) throw ConfigError("scale must be positive");

  // Unscaled widths; the assignment net's final node width is the cluster count.
  std::size_t enc, prop, last_embed, gcn1, assign1, gcn2;
  if (base == "enzymes-paper") {
    enc = 512, prop = 512, last_embed = 256, gcn1 = 512, assign1 = 256, gcn2 = 1024;
    c.clusters1 = 8, c.clusters2 = 4, c.num_classes = 6;
    c.sim = {1, 0.0, 1.0, 12, true};
    c.w_e = 1.0, c.w_c = 1.0, c.epochs = 100;
  } else if (base == "dd-paper") {
    enc = 1024, prop = 1024, last_embed = 1024, gcn1 = 2048, assign1 = 2048, gcn2 = 4096;
    c.clusters1 = 32, c.clusters2 = 8, c.num_classes = 2;
    c.sim = {1, 0.0, 1.0, 25, true};
    c.w_e = 0.4, c.w_c = 1.0, c.epochs = 230;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.preset = base;
  c.scale = s;
  c.embed0_encoder = scaled(enc, s);
  c.embed0_propagations = {{scaled(prop, s), scaled(prop, s), Activation::Relu},
                           {scaled(prop, s), scaled(last_embed, s), Activation::Linear}};
  c.assign0_encoder = scaled(enc, s);
  c.assign0_propagations = {{scaled(prop, s), scaled(prop, s), Activation::Relu},
                            {scaled(prop, s), c.clusters1, Activation::Linear}};
  c.gcn1 = scaled(gcn1, s);
  c.assign1_hidden = scaled(assign1, s);
  c.gcn2 = scaled(gcn2, s);
  return c;
}

// --- model ------------------------------------------------------------------------------

SimPoolModel::SimPoolModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.input_dim == 0 || cfg_.num_classes == 0) {
    throw ConfigError("model config needs input_dim and num_classes");
  }
  if (cfg_.assign0_propagations.empty() || cfg_.assign0_propagations.back().node != cfg_.clusters1) {
    throw ConfigError("stage-0 assignment network must end at clusters1 units");
  }
  cfg_.sim.validate();
  std::mt19937_64 rng(seed);

  auto embed0 = std::make_unique<nn::GmnStack>(
      build_gmn(store_, "embed0", cfg_.input_dim, cfg_.embed0_encoder, cfg_.embed0_propagations, rng));
  auto assign0 = std::make_unique<nn::GmnStack>(build_gmn(
      store_, "assign0", assign_input_dim(cfg_.assign_inputs, cfg_.structural_dim(), cfg_.input_dim),
      cfg_.assign0_encoder, cfg_.assign0_propagations, rng));
  block0_.embed_net = std::move(embed0);
  block0_.assign_net = std::move(assign0);
  block0_.clusters_out = cfg_.clusters1;
  block0_.assign_inputs = cfg_.assign_inputs;

  const std::size_t d1 = cfg_.embed0_out();
  auto embed1 = std::make_unique<nn::GcnNet>();
  embed1->gcn = nn::Gcn::create(store_, "embed1.gcn", d1, cfg_.gcn1, nn::Activation::Relu, rng);
  auto assign1 = std::make_unique<nn::MlpNet>();
  const auto in1 = assign_input_dim(cfg_.stage1_inputs(), cfg_.clusters1, d1);
  assign1->mlp.layers.push_back(
      nn::Dense::create(store_, "assign1.hidden", in1, cfg_.assign1_hidden, nn::Activation::Relu, rng));
  assign1->mlp.layers.push_back(
      nn::Dense::create(store_, "assign1.out", cfg_.assign1_hidden, cfg_.clusters2, nn::Activation::Linear, rng));
  block1_.embed_net = std::move(embed1);
  block1_.assign_net = std::move(assign1);
  block1_.clusters_out = cfg_.clusters2;
  block1_.assign_inputs = cfg_.stage1_inputs();

  gcn2_ = nn::Gcn::create(store_, "embed2.gcn", cfg_.gcn1, cfg_.gcn2, nn::Activation::Relu, rng);
  classifier_ = nn::Dense::create(store_, "classifier", cfg_.gcn2, cfg_.num_classes, nn::Activation::Linear, rng);
}

GraphForward SimPoolModel::forward_graph(ad::Tape& tape, const SparseMatrix& adjacency, const Matrix& features,
                                         const Matrix* structural, const Eigen::VectorXd* mask,
                                         std::size_t label) const {
  const auto n = adjacency.rows();
  if (features.rows() != n) throw ArgumentError("feature rows do not match adjacency");
  if (label >= cfg_.num_classes) throw ArgumentError("label out of range");
  std::optional<ad::Tensor> s_in;
  if (uses_structural(cfg_.assign_inputs)) {
    if (!structural) throw ConfigError("structural assignment features required but not precomputed");
    if (structural->rows() != n || static_cast<std::size_t>(structural->cols()) != cfg_.structural_dim()) {
      throw ArgumentError("structural feature shape does not match graph/config");
    }
    s_in = tape.constant(*structural);
  }
  Matrix mask_col;
  double real_nodes = static_cast<double>(n);
  if (mask) {
    if (mask->size() != n) throw ArgumentError("mask length does not match node count");
    mask_col = *mask;
    real_nodes = mask->sum();
  }

  GraphForward out;
  out.node_count = static_cast<std::size_t>(real_nodes);
  const ad::Tensor x0 = tape.constant(features);
  const auto g0 = nn::GraphInput::constant(adjacency);
  const auto p0 = block0_.forward(tape, g0, x0, s_in, mask ? &mask_col : nullptr);
  out.assignments[0] = p0.s;
  out.l_e[0] = nn::loss_le(p0.s, real_nodes);
  out.l_c[0] = nn::loss_lc(p0.s, real_nodes);

  const auto g1 = nn::GraphInput::learned(p0.a_next);
  std::optional<ad::Tensor> s1_in;
  if (uses_structural(cfg_.stage1_inputs())) s1_in = simfeat::similarity_tensor(p0.a_next, cfg_.sim);
  const auto p1 = block1_.forward(tape, g1, p0.x_next, s1_in);
  out.assignments[1] = p1.s;
  out.l_e[1] = nn::loss_le(p1.s);
  out.l_c[1] = nn::loss_lc(p1.s);

  // Final stage: S^(2) is a single all-ones column, i.e. a global sum.
  const ad::Tensor z2 = gcn2_.forward(tape, p1.x_next, p1.a_next);
  const ad::Tensor pooled = ad::col_sum(z2);
  out.probabilities = ad::softmax_rows(classifier_.forward(tape, pooled));
  Matrix onehot = Matrix::Zero(1, static_cast<Eigen::Index>(cfg_.num_classes));
  onehot(0, static_cast<Eigen::Index>(label)) = 1.0;
  const ad::Tensor p_label = ad::sum(ad::mul(out.probabilities, tape.constant(onehot)));
  out.task_loss = ad::scale(ad::log(ad::clamp_min(p_label, nn::kProbabilityFloor)), -1.0);
  return out;
}

BatchForward SimPoolModel::forward(ad::Tape& tape, const PaddedBatch& batch, std::span<const Matrix> mapped) const {
  BatchForward out;
  const auto b = batch.size();
  if (b == 0) throw ArgumentError("empty batch");
  const bool need_structural = uses_structural(cfg_.assign_inputs);
  if (need_structural && mapped.empty()) {
    throw ConfigError("structural assignment features requested but no precomputed features supplied");
  }
  const auto nmax = static_cast<Eigen::Index>(batch.max_nodes);
  for (std::size_t g = 0; g < b; ++g) {
    Matrix padded;
    if (need_structural) {
      const auto idx = batch.graph_indices[g];
      if (idx >= mapped.size()) throw ConfigError("missing precomputed features for graph " + std::to_string(idx));
      const Matrix& m = mapped[idx];
      if (static_cast<std::size_t>(m.rows()) != batch.node_counts[g]) {
        throw ConfigError("precomputed features do not match graph " + std::to_string(idx));
      }
      padded = Matrix::Zero(nmax, m.cols());
      padded.topRows(m.rows()) = m;
    }
    out.graphs.push_back(forward_graph(tape, batch.adjacency[g], batch.features[g],
                                       need_structural ? &padded : nullptr, &batch.node_mask[g], batch.labels[g]));
  }
  auto mean_of = [&](auto pick) {
    ad::Tensor acc = pick(out.graphs[0]);
    for (std::size_t g = 1; g < b; ++g) acc = ad::add(acc, pick(out.graphs[g]));
    return ad::scale(acc, 1.0 / static_cast<double>(b));
  };
  const ad::Tensor task = mean_of([](const GraphForward& f) { return f.task_loss; });
  const ad::Tensor le0 = mean_of([](const GraphForward& f) { return f.l_e[0]; });
  const ad::Tensor le1 = mean_of([](const GraphForward& f) { return f.l_e[1]; });
  const ad::Tensor lc0 = mean_of([](const GraphForward& f) { return f.l_c[0]; });
  const ad::Tensor lc1 = mean_of([](const GraphForward& f) { return f.l_c[1]; });
  out.total_loss = ad::add(task, ad::add(ad::scale(ad::add(le0, le1), cfg_.w_e), ad::scale(ad::add(lc0, lc1), cfg_.w_c)));
  out.terms.task_loss = task.item();
  out.terms.l_e = {le0.item(), le1.item()};
  out.terms.l_c = {lc0.item(), lc1.item()};
  out.terms.weighted_total = out.total_loss.item();
  return out;
}

BatchForward model_forward(ad::Tape& tape, const SimPoolModel& model, const PaddedBatch& batch,
                           std::span<const Matrix> mapped) {
  return model.forward(tape, batch, mapped);
}

void SimPoolModel::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, "SPM1");
  io::write_u32(out, 1);
  io::write_string(out, cfg_.to_text());
  const auto params = store_.all();
  io::write_u64(out, params.size());
  for (const auto* p : params) {
    io::write_string(out, p->name);
    io::write_u64(out, 2);
    io::write_u64(out, static_cast<std::uint64_t>(p->value.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) io::write_f64(out, p->value(i, j));
  }
  io::atomic_write(path, out.str());
}

std::unique_ptr<SimPoolModel> SimPoolModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  io::expect_magic(in, "SPM1");
  if (const auto v = io::read_u32(in); v != 1) throw FormatError("unsupported SPM1 version " + std::to_string(v));
  auto model = std::make_unique<SimPoolModel>(ModelConfig::from_text(io::read_string(in)), 0);
  const auto count = io::read_u64(in);
  if (count != model->store_.size()) throw FormatError("checkpoint parameter count does not match config");
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name = io::read_string(in);
    const auto rank = io::read_u64(in);
    if (rank != 2) throw FormatError("unsupported tensor rank in checkpoint");
    const auto rows = static_cast<Eigen::Index>(io::read_u64(in));
    const auto cols = static_cast<Eigen::Index>(io::read_u64(in));
    auto* p = model->store_.find(name);
    if (!p || p->value.rows() != rows || p->value.cols() != cols) {
      throw FormatError("checkpoint tensor '" + name + "' does not match the model");
    }
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) p->value(i, j) = io::read_f64(in);
  }
  return model;
}

void SimPoolModel::copy_parameters_from(const SimPoolModel& other) {
  auto dst = store_.all();
  auto src = other.store_.all();
  if (dst.size() != src.size()) throw ArgumentError("parameter layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

std::vector<std::size_t> argmax_rows(const Matrix& s, std::size_t real_rows) {
  std::vector<std::size_t> out;
  const auto rows = std::min<Eigen::Index>(s.rows(), static_cast<Eigen::Index>(real_rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Index best = 0;
    s.row(i).maxCoeff(&best);
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

std::size_t distinct_clusters(const Matrix& s, std::size_t real_rows) {
  const auto a = argmax_rows(s, real_rows);
  return std::set<std::size_t>(a.begin(), a.end()).size();
}

}  // namespace simpool
