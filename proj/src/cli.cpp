#include "simpool/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "simpool/errors.hpp"
#include "simpool/gradcheck.hpp"
#include "simpool/io.hpp"
#include "simpool/model.hpp"
#include "simpool/simfeat.hpp"
#include "simpool/train.hpp"

namespace simpool::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised around dataset loading so the exit code reflects the phase, not the
// exception type (checkpoint and cache readers also throw FormatError).
class DatasetFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- shared option groups ---------------------------------------------------------------

struct DataOptions {
  std::string data_dir;
  std::string dataset;
  std::string cache_dir;

  void add(CLI::App* app, bool required = true) {
    auto* d = app->add_option("--data-dir", data_dir, "TU dataset directory (holds NAME_A.txt, ...)");
    if (required) d->required();
    app->add_option("--dataset", dataset, "dataset name; defaults to the directory name");
    app->add_option("--cache-dir", cache_dir, "similarity cache directory (else $SIMPOOL_CACHE_DIR, ./simpool-cache)");
  }

  std::string name() const {
    if (!dataset.empty()) return dataset;
    return fs::path(data_dir).lexically_normal().filename().string().empty()
               ? fs::path(data_dir).lexically_normal().parent_path().filename().string()
               : fs::path(data_dir).lexically_normal().filename().string();
  }

  fs::path cache() const {
    if (!cache_dir.empty()) return cache_dir;
    if (const char* env = std::getenv("SIMPOOL_CACHE_DIR"); env && *env) return env;
    return "simpool-cache";
  }

  Dataset load() const {
    try {
      return load_tu_dataset(data_dir, name());
    } catch (const FormatError& e) {
      throw DatasetFailure(e.what());
    } catch (const IntegrityError& e) {
      throw DatasetFailure(e.what());
    } catch (const fs::filesystem_error& e) {
      throw DatasetFailure(e.what());
    }
  }
};

struct SimOptions {
  std::optional<int> p;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  bool asymmetric = false;

  void add(CLI::App* app) {
    app->add_option("--p", p, "adjacency power");
    app->add_option("--lambda", lambda, "self-loop weight");
    app->add_option("--alpha", alpha, "similarity weight in the index encoding");
    app->add_option("--k", k, "top-k width of the structural features");
    app->add_flag("--asymmetric", asymmetric, "use the directed similarity variant");
  }

  void apply(simfeat::SimilarityConfig& s) const {
    if (p) s.p = *p;
    if (lambda) s.lambda = *lambda;
    if (alpha) s.alpha = *alpha;
    if (k) s.k = *k;
    if (asymmetric) s.symmetric = false;
  }
};

// Flat key=value file; keys are long option names with '_' or '-'. Values only
// fill options that were not given on the command line.
void apply_config_file(CLI::App* app, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw ConfigError(path + ": nested config files are not supported");
    auto* opt = app->get_option_no_throw("--" + key);
    if (!opt) throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// --- train / crossval options ------------------------------------------------------------

struct TrainOptions {
  DataOptions data;
  SimOptions sim;
  std::string config_file;
  std::string preset = "enzymes";
  std::optional<double> scale;
  std::optional<std::string> assign;
  std::optional<std::string> assign_l1;
  std::optional<double> w_e;
  std::optional<double> w_c;
  std::optional<std::size_t> epochs;
  double lr = 1e-4;
  std::size_t batch_size = 20;
  std::size_t folds = 10;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out_dir = "runs";

  void add(CLI::App* app, bool crossval) {
    data.add(app);
    sim.add(app);
    app->add_option("--config", config_file, "flat key=value config file; flags take precedence");
    app->add_option("--preset", preset, "enzymes-paper, dd-paper, enzymes, dd, enzymes-small, dd-small");
    app->add_option("--scale", scale, "multiplier for every hidden width");
    app->add_option("--assign", assign, "assignment inputs: structural, node or both");
    app->add_option("--assign-l1", assign_l1, "stage-1 assignment inputs (defaults to --assign)");
    app->add_option("--w-e", w_e, "weight of the entropy regulariser");
    app->add_option("--w-c", w_c, "weight of the cluster-uniformity regulariser");
    app->add_option("--epochs", epochs, "training epochs (defaults to the preset)");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch-size", batch_size, "graphs per batch");
    app->add_option("--folds", folds, "number of cross-validation folds");
    if (!crossval) app->add_option("--fold", fold, "fold to train on");
    if (crossval) app->add_option("--workers", workers, "parallel fold workers (0 = all cores)");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--out-dir", out_dir, "parent directory for run directories");
  }

  TrainConfig build(const Dataset& ds) const {
    TrainConfig cfg;
    cfg.model = preset_config(preset, scale);
    if (assign) cfg.model.assign_inputs = nn::parse_assign_inputs(*assign);
    if (assign_l1) cfg.model.assign_inputs_l1 = nn::parse_assign_inputs(*assign_l1);
    sim.apply(cfg.model.sim);
    if (w_e) cfg.model.w_e = *w_e;
    if (w_c) cfg.model.w_c = *w_c;
    cfg.model.input_dim = ds.feature_dim();
    cfg.model.num_classes = ds.num_classes;
    cfg.epochs = epochs.value_or(cfg.model.epochs);
    cfg.model.epochs = cfg.epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.folds = folds;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

bool needs_structural(const ModelConfig& m) { return m.assign_inputs != nn::AssignInputs::Node; }

std::vector<Matrix> load_structural(const ModelConfig& m, const Dataset& ds, const fs::path& cache_dir,
                                    const std::string& data_dir) {
  if (!needs_structural(m)) return {};
  const auto path = cache_dir / simfeat::cache_file_name(ds, m.sim);
  if (!fs::exists(path)) {
    std::ostringstream hint;
    hint << "structural assignment features requested but no similarity cache at " << path.string()
         << "\n  run: simpool preprocess --data-dir " << data_dir << " --dataset " << ds.name << " --k " << m.sim.k
         << " --p " << m.sim.p << " --lambda " << m.sim.lambda << " --alpha " << m.sim.alpha
         << (m.sim.symmetric ? "" : " --asymmetric") << " --cache-dir " << cache_dir.string();
    throw ConfigError(hint.str());
  }
  std::vector<Matrix> mapped;
  try {
    mapped = simfeat::load_feature_cache(path);
  } catch (const FormatError& e) {
    throw ConfigError("similarity cache " + path.string() + " is unreadable: " + e.what());
  }
  if (mapped.size() != ds.graphs.size()) throw ConfigError("similarity cache does not match the dataset");
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (static_cast<std::size_t>(mapped[i].rows()) != ds.graphs[i].node_count ||
        static_cast<std::size_t>(mapped[i].cols()) != m.sim.k) {
      throw ConfigError("similarity cache entry " + std::to_string(i) + " does not match the dataset");
    }
  }
  return mapped;
}

struct RunDir {
  fs::path path;
  std::string manifest_hash;
  json manifest;
};

RunDir create_run_dir(const std::string& command, const TrainConfig& cfg, const Dataset& ds,
                      const std::string& out_dir) {
  RunDir r;
  r.manifest["command"] = command;
  r.manifest["code_version"] = kCodeVersion;
  r.manifest["dataset"] = ds.name;
  r.manifest["dataset_hash"] = ds.content_hash;
  r.manifest["similarity_cache_key"] =
      needs_structural(cfg.model) ? simfeat::cache_file_name(ds, cfg.model.sim) : std::string("none");
  r.manifest["seed"] = cfg.seed;
  r.manifest["config"] = cfg.to_text();
  io::Fnv1a h;
  h.update(r.manifest.dump());
  r.manifest_hash = h.hex();
  const fs::path base = fs::path(out_dir) / r.manifest_hash;
  r.path = base;
  for (int i = 1; fs::exists(r.path); ++i) r.path = base.string() + "-" + std::to_string(i);
  fs::create_directories(r.path);
  r.manifest["manifest_hash"] = r.manifest_hash;
  r.manifest["started_at"] = utc_now();
  io::atomic_write(r.path / "manifest.json", r.manifest.dump(2) + "\n");
  return r;
}

void finish_run_dir(RunDir& r) {
  r.manifest["finished_at"] = utc_now();
  io::atomic_write(r.path / "manifest.json", r.manifest.dump(2) + "\n");
}

std::string with_manifest(const std::string& aggregate, const std::string& manifest_hash) {
  auto j = json::parse(aggregate);
  j["manifest"] = manifest_hash;
  return j.dump(2) + "\n";
}

// --- commands ------------------------------------------------------------------------------

int cmd_preprocess(const DataOptions& data, const SimOptions& sim_opts, std::ostream& out) {
  simfeat::SimilarityConfig sim;
  sim_opts.apply(sim);
  sim.validate();
  const Dataset ds = data.load();
  const fs::path dir = data.cache();
  const fs::path path = dir / simfeat::cache_file_name(ds, sim);
  if (fs::exists(path)) {
    out << "cache hit: " << path.string() << "\n";
    return kOk;
  }
  fs::create_directories(dir);
  const auto mapped = simfeat::compute_mapped_features(ds, sim);
  simfeat::save_feature_cache(path, mapped);
  out << "wrote " << mapped.size() << " feature matrices of width " << sim.k << " to " << path.string() << "\n";
  return kOk;
}

int cmd_train(const TrainOptions& opts, std::ostream& out) {
  const Dataset ds = opts.data.load();
  const TrainConfig cfg = opts.build(ds);
  if (opts.fold >= cfg.folds) throw ArgumentError("--fold must be smaller than --folds");
  const auto mapped = load_structural(cfg.model, ds, opts.data.cache(), opts.data.data_dir);
  RunDir run = create_run_dir("train", cfg, ds, opts.out_dir);

  const fs::path csv_path = run.path / "stats.csv";
  std::ofstream csv(csv_path);
  csv << kStatsHeader << "\n" << std::flush;
  auto result = train_run(cfg, ds, mapped, opts.fold, [&](const EpochStats& e) {
    csv << format_stats_row(e) << "\n" << std::flush;
    out << "epoch " << e.epoch << " task_loss " << e.task_loss << " train_acc " << e.train_acc << " val_acc "
        << e.val_acc << " clusters " << e.clusters[0] << "/" << e.clusters[1] << "\n";
  });
  csv.close();
  result.model->save(run.path / "model.spm");

  CrossValResult cv;
  cv.runs.push_back(result.stats);
  const double m = result.stats.max_val_acc;
  cv.summary = aggregate(std::span<const double>(&m, 1), result.stats.aborted);
  io::atomic_write(run.path / "aggregate.json", with_manifest(aggregate_json(cfg, ds.content_hash, cv), run.manifest_hash));
  finish_run_dir(run);

  out << "max val_acc " << result.stats.max_val_acc << " at epoch " << result.stats.best_epoch << "\n";
  out << "run directory " << run.path.string() << "\n";
  if (result.stats.aborted) {
    out << "run aborted after epoch " << result.stats.last_good_epoch << ": " << result.stats.abort_reason << "\n";
    return kNumericError;
  }
  return kOk;
}

int cmd_crossval(const TrainOptions& opts, std::ostream& out) {
  const Dataset ds = opts.data.load();
  const TrainConfig cfg = opts.build(ds);
  const auto mapped = load_structural(cfg.model, ds, opts.data.cache(), opts.data.data_dir);
  RunDir run = create_run_dir("crossval", cfg, ds, opts.out_dir);
  const auto cv = cross_validate(cfg, ds, mapped, opts.workers, [&](const TrainResult& r) {
    const std::string tag = "fold" + std::to_string(r.stats.fold);
    std::ostringstream csv;
    write_stats_csv(csv, r.stats.epochs);
    io::atomic_write(run.path / ("stats-" + tag + ".csv"), csv.str());
    r.model->save(run.path / ("model-" + tag + ".spm"));
    out << "fold " << r.stats.fold << " max val_acc " << r.stats.max_val_acc << " at epoch " << r.stats.best_epoch
        << (r.stats.aborted ? " (aborted)" : "") << "\n";
  });
  io::atomic_write(run.path / "aggregate.json", with_manifest(aggregate_json(cfg, ds.content_hash, cv), run.manifest_hash));
  finish_run_dir(run);
  out << "mean " << cv.summary.mean << " std " << cv.summary.stddev << (cv.summary.partial ? " (partial)" : "") << "\n";
  out << "run directory " << run.path.string() << "\n";
  return cv.summary.partial ? kNumericError : kOk;
}

std::unique_ptr<SimPoolModel> load_checkpoint(const std::string& path, const Dataset& ds) {
  std::unique_ptr<SimPoolModel> model;
  try {
    model = SimPoolModel::load(path);
  } catch (const FormatError& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  const auto& c = model->config();
  if (c.input_dim != ds.feature_dim() || c.num_classes != ds.num_classes) {
    throw ConfigError("checkpoint is incompatible with dataset " + ds.name);
  }
  return model;
}

int cmd_evaluate(const DataOptions& data, const std::string& checkpoint, std::optional<std::size_t> fold,
                 std::size_t folds, std::uint64_t seed, std::size_t batch_size, std::ostream& out) {
  const Dataset ds = data.load();
  const auto model = load_checkpoint(checkpoint, ds);
  const auto mapped = load_structural(model->config(), ds, data.cache(), data.data_dir);
  std::vector<std::size_t> indices;
  if (fold) {
    if (*fold >= folds) throw ArgumentError("--fold must be smaller than --folds");
    indices = kfold_split(ds, folds, seed)[*fold].validation;
  } else {
    indices.resize(ds.graphs.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  }
  if (batch_size == 0) throw ArgumentError("--batch-size must be positive");
  const auto r = evaluate(*model, ds, indices, mapped, batch_size);
  json j;
  j["dataset"] = ds.name;
  j["dataset_hash"] = ds.content_hash;
  j["graphs"] = indices.size();
  j["accuracy"] = r.accuracy;
  j["task_loss"] = r.task_loss;
  j["clusters_0"] = r.clusters[0];
  j["clusters_1"] = r.clusters[1];
  out << j.dump(2) << "\n";
  return kOk;
}

int cmd_gradcheck(const GradCheckOptions& opts, const std::string& corrupt, std::ostream& out) {
  if (!corrupt.empty()) ad::debug::corrupt_backward(corrupt);
  const auto report = run_gradcheck_suite(opts);
  if (!corrupt.empty()) ad::debug::corrupt_backward("");
  report.print(out);
  return report.passed() ? kOk : kNumericError;
}

int cmd_export(const DataOptions& data, const std::string& checkpoint, const std::vector<long long>& graphs,
               std::optional<std::size_t> random_count, std::uint64_t seed, const std::string& output,
               std::ostream& out) {
  const Dataset ds = data.load();
  const auto model = load_checkpoint(checkpoint, ds);
  const auto mapped = load_structural(model->config(), ds, data.cache(), data.data_dir);

  std::vector<std::size_t> indices;
  for (long long g : graphs) {
    if (g < 0 || static_cast<std::size_t>(g) >= ds.graphs.size()) {
      throw ArgumentError("graph index " + std::to_string(g) + " out of range [0, " +
                          std::to_string(ds.graphs.size()) + ")");
    }
    indices.push_back(static_cast<std::size_t>(g));
  }
  if (random_count) {
    if (*random_count > ds.graphs.size()) throw ArgumentError("--random exceeds the number of graphs");
    std::vector<std::size_t> all(ds.graphs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(*random_count);
    std::sort(all.begin(), all.end());
    indices.insert(indices.end(), all.begin(), all.end());
  }
  if (indices.empty()) throw ArgumentError("no graphs selected (use --graphs or --random)");

  json j;
  j["dataset"] = ds.name;
  j["dataset_hash"] = ds.content_hash;
  j["checkpoint"] = checkpoint;
  auto list = json::array();
  for (std::size_t idx : indices) {
    const auto& g = ds.graphs[idx];
    const auto batch = make_padded_batch(ds, {idx});
    ad::Tape tape;
    const auto fwd = model->forward(tape, batch, mapped);
    const auto& f = fwd.graphs[0];
    const auto c0 = argmax_rows(f.assignments[0].value(), g.node_count);
    const Matrix& s1 = f.assignments[1].value();
    const auto c1_coarse = argmax_rows(s1, static_cast<std::size_t>(s1.rows()));
    std::vector<std::size_t> c1;
    for (auto c : c0) c1.push_back(c1_coarse[c]);

    auto edges = json::array();
    for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it) {
        if (g.symmetric && it.col() < it.row()) continue;
        edges.push_back({it.row(), it.col()});
      }
    }
    Eigen::Index pred = 0;
    f.probabilities.value().row(0).maxCoeff(&pred);
    json item;
    item["index"] = idx;
    item["label"] = g.label;
    item["predicted"] = pred;
    item["nodes"] = g.node_count;
    item["edges"] = edges;
    item["clusters"] = {{"layer_0", c0}, {"layer_1", c1}, {"layer_1_coarse", c1_coarse}};
    item["cluster_counts"] = {std::set<std::size_t>(c0.begin(), c0.end()).size(),
                              std::set<std::size_t>(c1_coarse.begin(), c1_coarse.end()).size()};
    list.push_back(item);
  }
  j["graphs"] = list;
  const std::string text = j.dump(2) + "\n";
  if (output.empty() || output == "-") {
    out << text;
  } else {
    io::atomic_write(output, text);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SimPool graph pooling: preprocessing, training and diagnostics", "simpool"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "compute and cache structural similarity features");
  DataOptions pre_data;
  SimOptions pre_sim;
  pre_data.add(pre);
  pre_sim.add(pre);

  auto* train = app.add_subcommand("train", "train one fold");
  TrainOptions train_opts;
  train_opts.add(train, false);

  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation");
  TrainOptions cv_opts;
  cv_opts.add(cv, true);

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  DataOptions ev_data;
  std::string ev_ckpt;
  std::optional<std::size_t> ev_fold;
  std::size_t ev_folds = 10, ev_batch = 20;
  std::uint64_t ev_seed = 0;
  ev_data.add(ev);
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--fold", ev_fold, "evaluate only the validation part of this fold");
  ev->add_option("--folds", ev_folds, "fold count of the split");
  ev->add_option("--seed", ev_seed, "split seed");
  ev->add_option("--batch-size", ev_batch, "graphs per batch");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  GradCheckOptions gc_opts;
  std::string gc_corrupt;
  gc->add_option("--preset", gc_opts.preset, "architecture preset for the full-model check");
  gc->add_option("--scale", gc_opts.scale, "width multiplier for the full-model check");
  gc->add_option("--seed", gc_opts.seed, "RNG seed");
  gc->add_option("--graphs", gc_opts.graphs, "number of random graphs");
  gc->add_option("--max-nodes", gc_opts.max_nodes, "largest random graph");
  gc->add_option("--epsilon", gc_opts.epsilon, "finite-difference step");
  gc->add_option("--tolerance", gc_opts.tolerance, "maximum relative error");
  gc->add_option("--corrupt-backward", gc_corrupt)->group("");  // test hook

  auto* ex = app.add_subcommand("export-assignments", "dump per-node cluster assignments as JSON");
  DataOptions ex_data;
  std::string ex_ckpt, ex_output;
  std::vector<long long> ex_graphs;
  std::optional<std::size_t> ex_random;
  std::uint64_t ex_seed = 0;
  ex_data.add(ex);
  ex->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
  ex->add_option("--graphs", ex_graphs, "graph indices")->delimiter(',');
  ex->add_option("--random", ex_random, "add this many randomly chosen graphs");
  ex->add_option("--seed", ex_seed, "seed for --random");
  ex->add_option("--output,-o", ex_output, "output file (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kArgumentError;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(pre_data, pre_sim, out);
    if (train->parsed()) {
      apply_config_file(train, train_opts.config_file);
      return cmd_train(train_opts, out);
    }
    if (cv->parsed()) {
      apply_config_file(cv, cv_opts.config_file);
      return cmd_crossval(cv_opts, out);
    }
    if (ev->parsed()) return cmd_evaluate(ev_data, ev_ckpt, ev_fold, ev_folds, ev_seed, ev_batch, out);
    if (gc->parsed()) return cmd_gradcheck(gc_opts, gc_corrupt, out);
    if (ex->parsed()) return cmd_export(ex_data, ex_ckpt, ex_graphs, ex_random, ex_seed, ex_output, out);
  } catch (const DatasetFailure& e) {
    err << "dataset error: " << e.what() << "\n";
    return kDatasetError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << "\n";
    return kArgumentError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const DomainError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kArgumentError;
}

}  // namespace simpool::cli
