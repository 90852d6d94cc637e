#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simpool/graph.hpp"
#include "simpool/model.hpp"

namespace simpool {

struct TrainConfig {
  ModelConfig model;  // carries preset, assignment inputs, similarity config and w_E / w_C
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 20;
  std::size_t folds = 10;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  std::string to_text() const;
};

// --- Adam -------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t t = 0;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// In-place update of every parameter from its accumulated gradient. Throws
// NumericError naming the parameter on a non-finite gradient, before any
// parameter is touched.
void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamOptions& opts);

// --- statistics -----------------------------------------------------------------------

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double task_loss = 0.0;
  std::array<double, 2> l_e{};
  std::array<double, 2> l_c{};
  double train_acc = 0.0;
  double val_acc = 0.0;
  // Mean over validation graphs of the number of distinct argmax clusters.
  std::array<double, 2> clusters{};

  bool operator==(const EpochStats&) const = default;
};

struct RunStats {
  std::size_t fold = 0;
  double initial_val_acc = 0.0;  // before the first update
  std::vector<EpochStats> epochs;
  double max_val_acc = 0.0;
  std::size_t best_epoch = 0;
  bool aborted = false;
  std::size_t last_good_epoch = 0;
  std::string abort_reason;
  double seconds = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double task_loss = 0.0;
  std::array<double, 2> clusters{};
  std::vector<std::size_t> predictions;
};

EvalResult evaluate(const SimPoolModel& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                    std::span<const Matrix> mapped, std::size_t batch_size = 20);

struct TrainResult {
  RunStats stats;
  std::unique_ptr<SimPoolModel> model;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains on fold `fold` of a seeded stratified split and validates on its
// held-out part. `mapped` holds precomputed structural features per graph
// (may be empty when the configuration does not use them).
TrainResult train_run(const TrainConfig& cfg, const Dataset& ds, std::span<const Matrix> mapped,
                      std::size_t fold, const EpochCallback& on_epoch = {});

struct Aggregate {
  std::vector<double> fold_maxima;
  double mean = 0.0;
  double stddev = 0.0;  // population
  bool partial = false;
};

Aggregate aggregate(std::span<const double> maxima, bool partial = false);

struct CrossValResult {
  std::vector<RunStats> runs;
  Aggregate summary;
};

// One independent worker per fold, at most `workers` in flight (0 = hardware
// concurrency). `on_fold` runs on the calling thread once a fold finishes.
CrossValResult cross_validate(const TrainConfig& cfg, const Dataset& ds, std::span<const Matrix> mapped,
                              std::size_t workers = 0,
                              const std::function<void(const TrainResult&)>& on_fold = {});

// --- export -----------------------------------------------------------------------------

inline constexpr const char* kStatsHeader =
    "epoch,task_loss,le_0,le_1,lc_0,lc_1,train_acc,val_acc,clusters_0,clusters_1";

std::string format_stats_row(const EpochStats& e);
void write_stats_csv(std::ostream& out, const std::vector<EpochStats>& rows);
std::vector<EpochStats> parse_stats_csv(const std::string& text);

std::string aggregate_json(const TrainConfig& cfg, const std::string& dataset_hash, const CrossValResult& result);

}  // namespace simpool
