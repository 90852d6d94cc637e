#include "simpool/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "simpool/errors.hpp"

namespace simpool {
namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix(mix(mix(seed) ^ a) ^ b);
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t predicted_class(const Matrix& probs) {
  Eigen::Index best = 0;
  probs.row(0).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

}  // namespace

// --- config ----------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (!(model.w_e >= 0.0) || !(model.w_c >= 0.0)) throw ConfigError("regulariser weights must be non-negative");
  model.sim.validate();
}

std::string TrainConfig::to_text() const {
  ModelConfig m = model;
  m.epochs = epochs;
  std::ostringstream o;
  o << m.to_text() << "learning_rate=" << fmt(learning_rate) << "\n"
    << "batch_size=" << batch_size << "\n"
    << "folds=" << folds << "\n"
    << "seed=" << seed << "\n";
  return o.str();
}

// --- Adam --------------------------------------------------------------------------------

void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamOptions& opts) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw ArgumentError("adam state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols() ||
        state.m[i].rows() != p->value.rows() || state.m[i].cols() != p->value.cols()) {
      throw ArgumentError("adam: shape mismatch for parameter " + p->name);
    }
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient for parameter " + p->name);
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    state.m[i] = opts.beta1 * state.m[i] + (1.0 - opts.beta1) * p->grad;
    state.v[i] = opts.beta2 * state.v[i] + (1.0 - opts.beta2) * p->grad.cwiseProduct(p->grad);
    const Matrix m_hat = state.m[i] / c1;
    const Matrix v_hat = state.v[i] / c2;
    p->value.array() -= opts.lr * m_hat.array() / (v_hat.array().sqrt() + opts.epsilon);
  }
}

// --- evaluation ---------------------------------------------------------------------------

EvalResult evaluate(const SimPoolModel& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                    std::span<const Matrix> mapped, std::size_t batch_size) {
  EvalResult r;
  if (indices.empty()) return r;
  std::size_t correct = 0;
  double loss = 0.0;
  std::array<double, 2> clusters{};
  for (const auto& batch : make_batches(ds, batch_size, std::nullopt, indices)) {
    ad::Tape tape;
    const auto out = model.forward(tape, batch, mapped);
    for (std::size_t g = 0; g < batch.size(); ++g) {
      const auto& f = out.graphs[g];
      const auto pred = predicted_class(f.probabilities.value());
      r.predictions.push_back(pred);
      if (pred == batch.labels[g]) ++correct;
      loss += f.task_loss.item();
      clusters[0] += static_cast<double>(distinct_clusters(f.assignments[0].value(), batch.node_counts[g]));
      clusters[1] += static_cast<double>(
          distinct_clusters(f.assignments[1].value(), static_cast<std::size_t>(f.assignments[1].rows())));
    }
  }
  const double n = static_cast<double>(indices.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.task_loss = loss / n;
  r.clusters = {clusters[0] / n, clusters[1] / n};
  return r;
}

// --- training ----------------------------------------------------------------------------------

TrainResult train_run(const TrainConfig& cfg, const Dataset& ds, std::span<const Matrix> mapped,
                      std::size_t fold, const EpochCallback& on_epoch) {
  cfg.validate();
  if (fold >= cfg.folds) throw ArgumentError("fold index out of range");
  const auto start = std::chrono::steady_clock::now();

  ModelConfig mcfg = cfg.model;
  mcfg.epochs = cfg.epochs;
  mcfg.input_dim = ds.feature_dim();
  mcfg.num_classes = ds.num_classes;
  const auto split = kfold_split(ds, cfg.folds, cfg.seed);
  const auto& part = split[fold];

  TrainResult result;
  result.model = std::make_unique<SimPoolModel>(mcfg, derive_seed(cfg.seed, 1, fold));
  auto& model = *result.model;
  auto& stats = result.stats;
  stats.fold = fold;

  const auto params = model.parameters().all();
  AdamState adam;
  const AdamOptions opts{cfg.learning_rate};

  stats.initial_val_acc = evaluate(model, ds, part.validation, mapped, cfg.batch_size).accuracy;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats e;
    e.epoch = epoch;
    std::size_t seen = 0, correct = 0;
    try {
      for (const auto& batch : make_batches(ds, cfg.batch_size, derive_seed(cfg.seed, 2 + fold, epoch), part.train)) {
        model.parameters().zero_grad();
        ad::Tape tape;
        const auto out = model.forward(tape, batch, mapped);
        if (!std::isfinite(out.terms.weighted_total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        }
        tape.backward(out.total_loss);
        adam_step(params, adam, opts);

        const double b = static_cast<double>(batch.size());
        e.task_loss += out.terms.task_loss * b;
        for (int l = 0; l < 2; ++l) {
          e.l_e[l] += out.terms.l_e[l] * b;
          e.l_c[l] += out.terms.l_c[l] * b;
        }
        for (std::size_t g = 0; g < batch.size(); ++g) {
          if (predicted_class(out.graphs[g].probabilities.value()) == batch.labels[g]) ++correct;
        }
        seen += batch.size();
      }
      const double n = static_cast<double>(seen);
      e.task_loss /= n;
      for (int l = 0; l < 2; ++l) {
        e.l_e[l] /= n;
        e.l_c[l] /= n;
      }
      e.train_acc = static_cast<double>(correct) / n;
      const auto val = evaluate(model, ds, part.validation, mapped, cfg.batch_size);
      if (!std::isfinite(val.task_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      e.val_acc = val.accuracy;
      e.clusters = val.clusters;
    } catch (const NumericError& err) {
      stats.aborted = true;
      stats.abort_reason = err.what();
      break;
    } catch (const DomainError& err) {
      stats.aborted = true;
      stats.abort_reason = err.what();
      break;
    }
    stats.epochs.push_back(e);
    stats.last_good_epoch = epoch;
    if (stats.epochs.size() == 1 || e.val_acc > stats.max_val_acc) {
      stats.max_val_acc = e.val_acc;
      stats.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(e);
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// --- cross-validation ---------------------------------------------------------------------------

Aggregate aggregate(std::span<const double> maxima, bool partial) {
  Aggregate a;
  a.fold_maxima.assign(maxima.begin(), maxima.end());
  a.partial = partial;
  if (maxima.empty()) return a;
  const double n = static_cast<double>(maxima.size());
  a.mean = std::accumulate(maxima.begin(), maxima.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : maxima) ss += (m - a.mean) * (m - a.mean);
  a.stddev = std::sqrt(ss / n);
  return a;
}

CrossValResult cross_validate(const TrainConfig& cfg, const Dataset& ds, std::span<const Matrix> mapped,
                              std::size_t workers, const std::function<void(const TrainResult&)>& on_fold) {
  cfg.validate();
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  CrossValResult out;
  out.runs.resize(cfg.folds);
  for (std::size_t first = 0; first < cfg.folds; first += workers) {
    const std::size_t last = std::min(cfg.folds, first + workers);
    std::vector<std::future<TrainResult>> wave;
    for (std::size_t f = first; f < last; ++f) {
      wave.push_back(std::async(std::launch::async, [&, f] { return train_run(cfg, ds, mapped, f); }));
    }
    for (std::size_t f = first; f < last; ++f) {
      auto r = wave[f - first].get();
      if (on_fold) on_fold(r);
      out.runs[f] = std::move(r.stats);
    }
  }
  std::vector<double> maxima;
  bool partial = false;
  for (const auto& r : out.runs) {
    maxima.push_back(r.max_val_acc);
    partial = partial || r.aborted;
  }
  out.summary = aggregate(maxima, partial);
  return out;
}

// --- export ---------------------------------------------------------------------------------------

std::string format_stats_row(const EpochStats& e) {
  std::string s = std::to_string(e.epoch);
  for (double v : {e.task_loss, e.l_e[0], e.l_e[1], e.l_c[0], e.l_c[1], e.train_acc, e.val_acc, e.clusters[0],
                   e.clusters[1]}) {
    s += ",";
    s += fmt(v);
  }
  return s;
}

void write_stats_csv(std::ostream& out, const std::vector<EpochStats>& rows) {
  out << kStatsHeader << "\n";
  for (const auto& r : rows) out << format_stats_row(r) << "\n";
}

std::vector<EpochStats> parse_stats_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kStatsHeader) throw FormatError("stats CSV header mismatch");
  std::vector<EpochStats> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != 10) throw FormatError("stats CSV line " + std::to_string(lineno) + ": expected 10 fields");
    auto num = [&](std::string_view c, auto& dst) {
      auto res = std::from_chars(c.data(), c.data() + c.size(), dst);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw FormatError("stats CSV line " + std::to_string(lineno) + ": bad number '" + std::string(c) + "'");
      }
    };
    EpochStats e;
    num(cells[0], e.epoch);
    num(cells[1], e.task_loss);
    num(cells[2], e.l_e[0]);
    num(cells[3], e.l_e[1]);
    num(cells[4], e.l_c[0]);
    num(cells[5], e.l_c[1]);
    num(cells[6], e.train_acc);
    num(cells[7], e.val_acc);
    num(cells[8], e.clusters[0]);
    num(cells[9], e.clusters[1]);
    rows.push_back(e);
  }
  return rows;
}

std::string aggregate_json(const TrainConfig& cfg, const std::string& dataset_hash, const CrossValResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json config;
  std::istringstream text(cfg.to_text());
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = config;
  j["dataset_hash"] = dataset_hash;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& r : result.runs) {
    folds.push_back({{"fold", r.fold},
                     {"max_val_acc", r.max_val_acc},
                     {"best_epoch", r.best_epoch},
                     {"epochs_completed", r.epochs.size()},
                     {"aborted", r.aborted},
                     {"last_good_epoch", r.last_good_epoch},
                     {"abort_reason", r.abort_reason}});
  }
  j["folds"] = folds;
  j["fold_maxima"] = result.summary.fold_maxima;
  j["mean"] = result.summary.mean;
  j["std"] = result.summary.stddev;
  j["std_kind"] = "population";
  j["partial"] = result.summary.partial;
  return j.dump(2) + "\n";
}

}  // namespace simpool
