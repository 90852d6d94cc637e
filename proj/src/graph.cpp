#include "simpool/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "simpool/errors.hpp"
#include "simpool/io.hpp"

namespace simpool {
namespace fs = std::filesystem;

namespace {

// Parses every integer token of a TU text file. Tokens are separated by
// whitespace and/or commas.
std::vector<std::int64_t> parse_int_tokens(const std::string& text, const std::string& what) {
  std::vector<std::int64_t> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == ',' || *p == '\n' || *p == '\r')) ++p;
    if (p >= end) break;
    std::int64_t v = 0;
    // from_chars rejects a leading '+'.
    if (*p == '+') ++p;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{}) {
      throw FormatError(what + ": non-integer token near byte " + std::to_string(p - text.data()));
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

std::string read_required(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("missing mandatory file " + path.string());
  return io::read_file(path);
}

struct EdgeDedupMax {
  double operator()(double a, double b) const { return std::max(a, b); }
};

}  // namespace

void validate(const Graph& g) {
  if (g.node_count == 0) throw IntegrityError("graph has no nodes");
  const auto n = static_cast<Eigen::Index>(g.node_count);
  if (g.adjacency.rows() != n || g.adjacency.cols() != n) {
    throw IntegrityError("adjacency dimension does not match node count");
  }
  if (g.node_features.rows() != n) throw IntegrityError("feature rows do not match node count");
  for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
      if (!(it.value() >= 0.0)) throw IntegrityError("negative adjacency entry");
    }
  }
  if (g.symmetric) {
    SparseMatrix t = g.adjacency.transpose();
    if ((t - g.adjacency).norm() != 0.0) throw IntegrityError("graph flagged symmetric is not");
  }
}

void validate(const Dataset& ds) {
  if (ds.num_classes == 0) throw IntegrityError("dataset has no classes");
  const auto d0 = ds.feature_dim();
  for (const auto& g : ds.graphs) {
    validate(g);
    if (g.label >= ds.num_classes) throw IntegrityError("label out of range");
    if (static_cast<std::size_t>(g.node_features.cols()) != d0) {
      throw IntegrityError("inconsistent feature dimensionality");
    }
  }
}

double Dataset::mean_node_count() const {
  if (graphs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : graphs) total += static_cast<double>(g.node_count);
  return total / static_cast<double>(graphs.size());
}

double Dataset::mean_edge_count() const {
  if (graphs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : graphs) {
    std::size_t diag = 0, off = 0;
    for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
        (it.row() == it.col() ? diag : off) += 1;
      }
    }
    total += static_cast<double>(diag) + static_cast<double>(off) / 2.0;
  }
  return total / static_cast<double>(graphs.size());
}

Dataset load_tu_dataset(const fs::path& root, const std::string& name) {
  const auto a_path = root / (name + "_A.txt");
  const auto gi_path = root / (name + "_graph_indicator.txt");
  const auto gl_path = root / (name + "_graph_labels.txt");
  const auto nl_path = root / (name + "_node_labels.txt");

  const std::string a_text = read_required(a_path);
  const std::string gi_text = read_required(gi_path);
  const std::string gl_text = read_required(gl_path);
  const bool has_node_labels = fs::exists(nl_path);
  const std::string nl_text = has_node_labels ? io::read_file(nl_path) : std::string{};

  io::Fnv1a hash;
  for (const auto* t : {&a_text, &gi_text, &gl_text, &nl_text}) {
    hash.update(*t);
    hash.update(std::string_view("\x1f", 1));
  }

  const auto indicator = parse_int_tokens(gi_text, gi_path.filename().string());
  const auto graph_labels = parse_int_tokens(gl_text, gl_path.filename().string());
  const auto edges = parse_int_tokens(a_text, a_path.filename().string());
  if (edges.size() % 2 != 0) throw FormatError(a_path.filename().string() + ": odd token count");
  if (indicator.empty()) throw FormatError("empty graph indicator");

  // Nodes of graph g must occupy one contiguous, sorted block; ids start at 1.
  const std::size_t num_graphs = graph_labels.size();
  std::vector<std::size_t> offset(num_graphs + 1, 0);
  std::int64_t prev = 0;
  for (std::size_t v = 0; v < indicator.size(); ++v) {
    const auto gid = indicator[v];
    if (gid != prev && gid != prev + 1) {
      throw IntegrityError("graph indicator is not sorted/contiguous at node " + std::to_string(v + 1));
    }
    if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs) {
      throw IntegrityError("graph indicator references graph " + std::to_string(gid) +
                           " but only " + std::to_string(num_graphs) + " labels exist");
    }
    if (gid != prev) offset[static_cast<std::size_t>(gid) - 1] = v;
    prev = gid;
  }
  if (static_cast<std::size_t>(prev) != num_graphs) {
    throw IntegrityError("graph indicator covers " + std::to_string(prev) + " graphs, labels list " +
                         std::to_string(num_graphs));
  }
  offset[num_graphs] = indicator.size();

  std::vector<std::int64_t> node_labels;
  if (has_node_labels) {
    node_labels = parse_int_tokens(nl_text, nl_path.filename().string());
    if (node_labels.size() != indicator.size()) {
      throw IntegrityError("node label count does not match graph indicator");
    }
  }

  std::vector<std::vector<Eigen::Triplet<double>>> triplets(num_graphs);
  for (std::size_t e = 0; e < edges.size(); e += 2) {
    const auto u = edges[e], v = edges[e + 1];
    const auto total = static_cast<std::int64_t>(indicator.size());
    if (u < 1 || v < 1 || u > total || v > total) {
      throw IntegrityError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                           ") references a node that does not exist");
    }
    const auto gu = indicator[static_cast<std::size_t>(u - 1)];
    const auto gv = indicator[static_cast<std::size_t>(v - 1)];
    if (gu != gv) {
      throw IntegrityError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                           ") crosses graphs " + std::to_string(gu) + " and " + std::to_string(gv));
    }
    const auto g = static_cast<std::size_t>(gu - 1);
    const auto lu = static_cast<int>(static_cast<std::size_t>(u - 1) - offset[g]);
    const auto lv = static_cast<int>(static_cast<std::size_t>(v - 1) - offset[g]);
    triplets[g].emplace_back(lu, lv, 1.0);
    triplets[g].emplace_back(lv, lu, 1.0);
  }

  std::map<std::int64_t, std::size_t> label_map;
  for (auto l : graph_labels) label_map.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [raw, mapped] : label_map) mapped = next++;

  std::map<std::int64_t, std::size_t> node_label_map;
  for (auto l : node_labels) node_label_map.emplace(l, 0);
  next = 0;
  for (auto& [raw, mapped] : node_label_map) mapped = next++;

  Dataset ds;
  ds.name = name;
  ds.num_classes = label_map.size();
  ds.content_hash = hash.hex();
  ds.feature_kind = has_node_labels ? FeatureKind::NodeLabelOneHot : FeatureKind::NormalisedDegree;
  ds.graphs.resize(num_graphs);

  double max_degree = 0.0;
  for (std::size_t g = 0; g < num_graphs; ++g) {
    auto& graph = ds.graphs[g];
    graph.node_count = offset[g + 1] - offset[g];
    const auto n = static_cast<Eigen::Index>(graph.node_count);
    graph.adjacency.resize(n, n);
    graph.adjacency.setFromTriplets(triplets[g].begin(), triplets[g].end(), EdgeDedupMax{});
    graph.adjacency.makeCompressed();
    graph.label = label_map.at(graph_labels[g]);
    graph.symmetric = true;
    if (has_node_labels) {
      graph.node_features = Matrix::Zero(n, static_cast<Eigen::Index>(node_label_map.size()));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto raw = node_labels[offset[g] + static_cast<std::size_t>(i)];
        graph.node_features(i, static_cast<Eigen::Index>(node_label_map.at(raw))) = 1.0;
      }
    } else {
      graph.node_features.resize(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double deg = graph.adjacency.row(i).sum();
        graph.node_features(i, 0) = deg;
        max_degree = std::max(max_degree, deg);
      }
    }
  }
  if (!has_node_labels && max_degree > 0.0) {
    for (auto& graph : ds.graphs) graph.node_features /= max_degree;
  }
  validate(ds);
  return ds;
}

void save_dataset_cache(const Dataset& ds, const fs::path& path) {
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, "SPG1");
  io::write_u32(out, 1);
  io::write_string(out, ds.name);
  io::write_string(out, ds.content_hash);
  io::write_u32(out, static_cast<std::uint32_t>(ds.feature_kind));
  io::write_u64(out, ds.num_classes);
  io::write_u64(out, ds.graphs.size());
  for (const auto& g : ds.graphs) {
    io::write_u64(out, g.node_count);
    io::write_u64(out, g.label);
    io::write_u64(out, g.symmetric ? 1 : 0);
    io::write_u64(out, static_cast<std::uint64_t>(g.adjacency.nonZeros()));
    for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
        io::write_u64(out, static_cast<std::uint64_t>(it.row()));
        io::write_u64(out, static_cast<std::uint64_t>(it.col()));
        io::write_f64(out, it.value());
      }
    }
    io::write_u64(out, static_cast<std::uint64_t>(g.node_features.cols()));
    for (Eigen::Index i = 0; i < g.node_features.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.node_features.cols(); ++j) io::write_f64(out, g.node_features(i, j));
    }
  }
  io::atomic_write(path, out.str());
}

Dataset load_dataset_cache(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, "SPG1");
  if (const auto version = io::read_u32(in); version != 1) {
    throw FormatError("unsupported SPG1 version " + std::to_string(version));
  }
  Dataset ds;
  ds.name = io::read_string(in);
  ds.content_hash = io::read_string(in);
  ds.feature_kind = static_cast<FeatureKind>(io::read_u32(in));
  ds.num_classes = io::read_u64(in);
  const auto count = io::read_u64(in);
  ds.graphs.resize(count);
  for (auto& g : ds.graphs) {
    g.node_count = io::read_u64(in);
    g.label = io::read_u64(in);
    g.symmetric = io::read_u64(in) != 0;
    const auto nnz = io::read_u64(in);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nnz);
    for (std::uint64_t e = 0; e < nnz; ++e) {
      const auto r = io::read_u64(in);
      const auto c = io::read_u64(in);
      const auto v = io::read_f64(in);
      if (r >= g.node_count || c >= g.node_count) throw FormatError("SPG1 entry out of range");
      trip.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    }
    const auto n = static_cast<Eigen::Index>(g.node_count);
    g.adjacency.resize(n, n);
    g.adjacency.setFromTriplets(trip.begin(), trip.end());
    g.adjacency.makeCompressed();
    const auto cols = static_cast<Eigen::Index>(io::read_u64(in));
    g.node_features.resize(n, cols);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) g.node_features(i, j) = io::read_f64(in);
    }
  }
  validate(ds);
  return ds;
}

PaddedBatch make_padded_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ArgumentError("empty batch");
  PaddedBatch b;
  for (auto idx : indices) {
    if (idx >= ds.graphs.size()) throw ArgumentError("graph index out of range");
    b.max_nodes = std::max(b.max_nodes, ds.graphs[idx].node_count);
  }
  const auto nmax = static_cast<Eigen::Index>(b.max_nodes);
  for (auto idx : indices) {
    const auto& g = ds.graphs[idx];
    const auto n = static_cast<Eigen::Index>(g.node_count);
    SparseMatrix a(nmax, nmax);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(g.adjacency.nonZeros()));
    for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    Matrix x = Matrix::Zero(nmax, g.node_features.cols());
    x.topRows(n) = g.node_features;
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(nmax);
    mask.head(n).setOnes();
    b.adjacency.push_back(std::move(a));
    b.features.push_back(std::move(x));
    b.node_mask.push_back(std::move(mask));
    b.labels.push_back(g.label);
    b.graph_indices.push_back(idx);
    b.node_counts.push_back(g.node_count);
  }
  return b;
}

std::vector<PaddedBatch> make_batches(const Dataset& ds, std::size_t batch_size,
                                      std::optional<std::uint64_t> shuffle_seed,
                                      std::vector<std::size_t> indices) {
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (ds.graphs.empty()) throw ArgumentError("cannot batch an empty dataset");
  if (indices.empty()) {
    indices.resize(ds.graphs.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(indices.begin(), indices.end(), rng);
  }
  std::vector<PaddedBatch> batches;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto stop = std::min(indices.size(), start + batch_size);
    batches.push_back(make_padded_batch(ds, {indices.begin() + static_cast<std::ptrdiff_t>(start),
                                             indices.begin() + static_cast<std::ptrdiff_t>(stop)}));
  }
  return batches;
}

std::vector<Fold> kfold_split(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ArgumentError("folds must be >= 2");
  if (folds > ds.graphs.size()) {
    throw ArgumentError("folds (" + std::to_string(folds) + ") exceed graph count (" +
                        std::to_string(ds.graphs.size()) + ")");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) by_label[ds.graphs[i].label].push_back(i);

  // Shuffle within each class, then deal round-robin with a single running
  // counter so fold sizes never differ by more than one.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  order.reserve(ds.graphs.size());
  for (auto& [label, members] : by_label) {
    std::shuffle(members.begin(), members.end(), rng);
    order.insert(order.end(), members.begin(), members.end());
  }
  std::vector<Fold> out(folds);
  for (std::size_t t = 0; t < order.size(); ++t) out[t % folds].validation.push_back(order[t]);
  for (std::size_t f = 0; f < folds; ++f) {
    std::sort(out[f].validation.begin(), out[f].validation.end());
    for (std::size_t g = 0; g < folds; ++g) {
      if (g == f) continue;
      for (std::size_t t = g; t < order.size(); t += folds) out[f].train.push_back(order[t]);
    }
    std::sort(out[f].train.begin(), out[f].train.end());
  }
  return out;
}

}  // namespace simpool
