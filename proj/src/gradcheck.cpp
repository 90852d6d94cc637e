#include "simpool/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>

#include "simpool/layers.hpp"
#include "simpool/model.hpp"
#include "simpool/simfeat.hpp"

namespace simpool {
namespace {

struct RandomGraph {
  SparseMatrix adjacency;
  Matrix features;
  std::size_t label = 0;
};

RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes, std::size_t dim, std::size_t classes) {
  std::uniform_int_distribution<std::size_t> size(3, max_nodes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const auto n = static_cast<Eigen::Index>(size(rng));
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < n; ++i) {
    // A chain keeps every node connected; extra edges at random.
    if (i + 1 < n) {
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i + 1), 1.0);
      trip.emplace_back(static_cast<int>(i + 1), static_cast<int>(i), 1.0);
    }
    for (Eigen::Index j = i + 2; j < n; ++j) {
      if (unit(rng) < 0.3) {
        trip.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
        trip.emplace_back(static_cast<int>(j), static_cast<int>(i), 1.0);
      }
    }
  }
  RandomGraph g;
  g.adjacency.resize(n, n);
  g.adjacency.setFromTriplets(trip.begin(), trip.end());
  g.features.resize(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < g.features.size(); ++i) g.features.data()[i] = sym(rng);
  g.label = std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng);
  return g;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Weighted sum with fixed random coefficients turns any output into a scalar
// whose gradient exercises every entry.
ad::Tensor project(ad::Tape& tape, const ad::Tensor& y, const Matrix& coeff) {
  return ad::sum(ad::mul(y, tape.constant(coeff)));
}

std::vector<ad::Parameter*> params_of(std::initializer_list<const nn::Dense*> layers) {
  std::vector<ad::Parameter*> out;
  for (const auto* d : layers) {
    out.push_back(d->weight);
    out.push_back(d->bias);
  }
  return out;
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(items.begin(), items.end(), [&](const auto& it) { return it.error < tolerance; });
}

std::vector<std::pair<std::string, double>> GradCheckReport::worst() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& it : items) {
    auto pos = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == it.check; });
    if (pos == out.end()) {
      out.emplace_back(it.check, it.error);
    } else {
      pos->second = std::max(pos->second, it.error);
    }
  }
  return out;
}

void GradCheckReport::print(std::ostream& out) const {
  std::size_t graphs = 0;
  for (const auto& it : items) graphs = std::max(graphs, it.graph + 1);
  out << "gradcheck: " << graphs << " graphs, epsilon " << epsilon << ", tolerance " << tolerance << "\n";
  for (const auto& [name, err] : worst()) {
    out << "  " << (err < tolerance ? "ok  " : "FAIL") << "  " << std::left << std::setw(22) << name
        << " max rel. error " << std::scientific << std::setprecision(3) << err << std::defaultfloat << "\n";
  }
  out << (passed() ? "PASS" : "FAIL") << "\n";
}

GradCheckReport run_gradcheck_suite(const GradCheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.tolerance = opts.tolerance;
  report.epsilon = opts.epsilon;
  const double eps = opts.epsilon;
  std::mt19937_64 rng(opts.seed);

  constexpr std::size_t kFeatureDim = 3;
  constexpr std::size_t kWidth = 6;

  ModelConfig mcfg = preset_config(opts.preset, opts.scale);
  mcfg.input_dim = kFeatureDim;
  mcfg.sim.k = std::min<std::size_t>(mcfg.sim.k, 4);

  for (std::size_t gi = 0; gi < opts.graphs; ++gi) {
    const auto g = random_graph(rng, opts.max_nodes, kFeatureDim, mcfg.num_classes);
    const auto n = g.adjacency.rows();
    auto record = [&](const std::string& name, double err) {
      report.items.push_back({name, gi, static_cast<std::size_t>(n), err});
    };

    nn::ParameterStore store;
    std::mt19937_64 init(opts.seed * 1000003 + gi);

    {  // encoder
      nn::GmnEncoder enc{nn::Dense::create(store, "enc", kFeatureDim, kWidth, nn::Activation::Relu, init)};
      const Matrix coeff = random_matrix(rng, n, kWidth, -1, 1);
      auto f = [&](ad::Tape& t, const ad::Tensor& x) { return project(t, nn::gmn_encode(t, x, enc), coeff); };
      const auto params = params_of({&enc.node});
      const double e1 = ad::grad_check(f, g.features, eps);
      const double e2 = ad::grad_check_parameters([&](ad::Tape& t) { return f(t, t.constant(g.features)); }, params, eps);
      record("gmn_encoder", std::max(e1, e2));
    }
    {  // two stacked propagations
      nn::GmnPropagation p1{nn::Dense::create(store, "p1.msg", 2 * kWidth, kWidth, nn::Activation::Relu, init),
                            nn::Dense::create(store, "p1.node", 2 * kWidth, kWidth, nn::Activation::Relu, init)};
      nn::GmnPropagation p2{nn::Dense::create(store, "p2.msg", 2 * kWidth, kWidth, nn::Activation::Linear, init),
                            nn::Dense::create(store, "p2.node", 2 * kWidth, kWidth, nn::Activation::Linear, init)};
      const Matrix h0 = random_matrix(rng, n, kWidth, -1, 1);
      const Matrix coeff = random_matrix(rng, n, kWidth, -1, 1);
      auto f = [&](ad::Tape& t, const ad::Tensor& h) {
        return project(t, nn::gmn_propagate(t, nn::gmn_propagate(t, h, g.adjacency, p1), g.adjacency, p2), coeff);
      };
      const auto params = params_of({&p1.message, &p1.node, &p2.message, &p2.node});
      const double e1 = ad::grad_check(f, h0, eps);
      const double e2 = ad::grad_check_parameters([&](ad::Tape& t) { return f(t, t.constant(h0)); }, params, eps);
      record("gmn_propagation", std::max(e1, e2));
    }
    {  // GCN, w.r.t. node states, a positive dense adjacency and the weight
      nn::Gcn gcn = nn::Gcn::create(store, "gcn", kWidth, kWidth, nn::Activation::Relu, init);
      const Matrix h0 = random_matrix(rng, n, kWidth, -1, 1);
      Matrix a = random_matrix(rng, n, n, 0.1, 1.0);
      a = (0.5 * (a + a.transpose())).eval();
      const Matrix coeff = random_matrix(rng, n, kWidth, -1, 1);
      auto fh = [&](ad::Tape& t, const ad::Tensor& h) { return project(t, nn::gcn_forward(t, h, t.constant(a), gcn), coeff); };
      auto fa = [&](ad::Tape& t, const ad::Tensor& av) { return project(t, nn::gcn_forward(t, t.constant(h0), av, gcn), coeff); };
      std::vector<ad::Parameter*> params{gcn.weight};
      const double e1 = ad::grad_check(fh, h0, eps);
      const double e2 = ad::grad_check(fa, a, eps);
      const double e3 = ad::grad_check_parameters([&](ad::Tape& t) { return fh(t, t.constant(h0)); }, params, eps);
      record("gcn", std::max({e1, e2, e3}));
    }
    {  // pooling with tanh coarsened adjacency, w.r.t. Z, S logits and a learned A
      const std::size_t clusters = 3;
      const Matrix z0 = random_matrix(rng, n, kWidth, -1, 1);
      const Matrix l0 = random_matrix(rng, n, clusters, -2, 2);
      Matrix a = random_matrix(rng, n, n, 0.0, 1.0);
      a = (0.5 * (a + a.transpose())).eval();
      const Matrix cx = random_matrix(rng, clusters, kWidth, -1, 1);
      const Matrix ca = random_matrix(rng, clusters, clusters, -1, 1);
      auto f = [&](ad::Tape& t, const ad::Tensor& z, const ad::Tensor& l, const ad::Tensor& av) {
        const auto out = nn::pool_forward(t, nn::GraphInput::learned(av), z, l, clusters);
        return ad::add(project(t, out.x_next, cx), project(t, out.a_next, ca));
      };
      const double e1 = ad::grad_check([&](ad::Tape& t, const ad::Tensor& z) { return f(t, z, t.constant(l0), t.constant(a)); }, z0, eps);
      const double e2 = ad::grad_check([&](ad::Tape& t, const ad::Tensor& l) { return f(t, t.constant(z0), l, t.constant(a)); }, l0, eps);
      const double e3 = ad::grad_check([&](ad::Tape& t, const ad::Tensor& av) { return f(t, t.constant(z0), t.constant(l0), av); }, a, eps);
      // Same pooling over the constant sparse input adjacency.
      const double e4 = ad::grad_check([&](ad::Tape& t, const ad::Tensor& l) {
        const auto out = nn::pool_forward(t, nn::GraphInput::constant(g.adjacency), t.constant(z0), l, clusters);
        return ad::add(project(t, out.x_next, cx), project(t, out.a_next, ca));
      }, l0, eps);
      record("pooling_tanh", std::max({e1, e2, e3, e4}));
    }
    {  // regularisers through the softmax
      const Matrix l0 = random_matrix(rng, n, 3, -2, 2);
      const double e_le = ad::grad_check([](ad::Tape&, const ad::Tensor& l) { return nn::loss_le(ad::softmax_rows(l)); }, l0, eps);
      const double e_lc = ad::grad_check([](ad::Tape&, const ad::Tensor& l) { return nn::loss_lc(ad::softmax_rows(l)); }, l0, eps);
      record("loss_le", e_le);
      record("loss_lc", e_lc);
    }
    {  // full model, every parameter
      ModelConfig cfg = mcfg;
      SimPoolModel model(cfg, opts.seed + gi);
      Graph graph;
      graph.node_count = static_cast<std::size_t>(n);
      graph.adjacency = g.adjacency;
      graph.node_features = g.features;
      const Matrix mapped = *simfeat::index_map(simfeat::similarity_for_graph(graph, cfg.sim), cfg.sim).mapped;
      auto params = model.parameters().all();
      auto f = [&](ad::Tape& t) {
        const auto out = model.forward_graph(t, g.adjacency, g.features, &mapped, nullptr, g.label);
        return ad::add(out.task_loss,
                       ad::add(ad::scale(ad::add(out.l_e[0], out.l_e[1]), cfg.w_e),
                               ad::scale(ad::add(out.l_c[0], out.l_c[1]), cfg.w_c)));
      };
      record("full_model", ad::grad_check_parameters(f, params, eps));
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace simpool
