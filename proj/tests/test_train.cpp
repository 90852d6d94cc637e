#include <doctest.h>

#include <cmath>
#include <sstream>

#include "simpool/errors.hpp"
#include "simpool/simfeat.hpp"
#include "simpool/train.hpp"
#include "support.hpp"

using namespace simpool;

namespace {

TrainConfig toy_config(std::size_t epochs, std::uint64_t seed) {
  TrainConfig c;
  c.model = preset_config("enzymes-paper", 0.0625);
  c.model.sim.k = 4;
  c.epochs = epochs;
  c.learning_rate = 5e-3;
  c.batch_size = 8;
  c.folds = 4;
  c.seed = seed;
  return c;
}

const Dataset& toy() {
  static const Dataset ds = testsupport::toy_dataset(40, 3);
  return ds;
}

const std::vector<Matrix>& toy_mapped() {
  static const std::vector<Matrix> m = simfeat::compute_mapped_features(toy(), toy_config(1, 0).model.sim);
  return m;
}

}  // namespace

TEST_CASE("adam: first step with unit gradient moves by -lr") {
  ad::Parameter p("w", Matrix::Constant(1, 1, 0.5));
  p.grad(0, 0) = 1.0;
  AdamState st;
  AdamOptions o;
  o.lr = 0.01;
  ad::Parameter* ps[] = {&p};
  adam_step(ps, st, o);
  CHECK(p.value(0, 0) - 0.5 == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: zero gradient leaves parameters but decays moments") {
  ad::Parameter p("w", Matrix::Constant(2, 2, 1.0));
  AdamState st;
  AdamOptions o;
  ad::Parameter* ps[] = {&p};
  p.grad.setConstant(1.0);
  adam_step(ps, st, o);
  const Matrix m1 = st.m[0], v1 = st.v[0];
  p.grad.setZero();
  adam_step(ps, st, o);
  // moments decay geometrically; a fresh state with zero gradient stays put
  CHECK((st.m[0] - 0.9 * m1).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((st.v[0] - 0.999 * v1).cwiseAbs().maxCoeff() < 1e-15);
  ad::Parameter q("q", Matrix::Constant(2, 2, 3.0));
  AdamState fresh;
  ad::Parameter* qs[] = {&q};
  adam_step(qs, fresh, o);
  CHECK(q.value == Matrix::Constant(2, 2, 3.0));
}

TEST_CASE("adam: constant gradient step approaches lr * sign(g)") {
  for (double g : {-3.0, 0.2, 40.0}) {
    ad::Parameter p("w", Matrix::Zero(1, 1));
    AdamState st;
    AdamOptions o;
    o.lr = 1e-3;
    ad::Parameter* ps[] = {&p};
    double prev = 0.0, step = 0.0;
    for (int t = 1; t <= 200; ++t) {
      p.grad(0, 0) = g;
      adam_step(ps, st, o);
      step = p.value(0, 0) - prev;
      prev = p.value(0, 0);
      // closed form: m_hat = g, v_hat = g^2 for a constant gradient
      CHECK(step == doctest::Approx(-o.lr * g / (std::abs(g) + o.epsilon)).epsilon(1e-9));
    }
    CHECK(step == doctest::Approx(-o.lr * (g > 0 ? 1.0 : -1.0)).epsilon(1e-6));
  }
}

TEST_CASE("adam: non-finite gradient names the parameter and changes nothing") {
  ad::Parameter a("alpha", Matrix::Ones(1, 2)), b("beta", Matrix::Ones(1, 1));
  a.grad.setConstant(1.0);
  b.grad(0, 0) = std::nan("");
  AdamState st;
  ad::Parameter* ps[] = {&a, &b};
  try {
    adam_step(ps, st, AdamOptions{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  CHECK(a.value == Matrix::Ones(1, 2));
  CHECK(st.t == 0);
}

TEST_CASE("aggregate") {
  const double two[] = {0.7, 0.8};
  const auto a = aggregate(two);
  CHECK(a.mean == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(a.stddev == doctest::Approx(0.05).epsilon(1e-12));
  const double same[] = {0.6, 0.6, 0.6};
  CHECK(aggregate(same).stddev == 0.0);
  CHECK(aggregate(same, true).partial);
}

TEST_CASE("config validation") {
  TrainConfig c = toy_config(1, 0);
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(1, 0);
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(1, 0);
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config(1, 0);
  c.model.w_c = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("one-epoch smoke run on 10 graphs") {
  const Dataset ds = testsupport::toy_dataset(10, 9);
  TrainConfig c = toy_config(1, 1);
  c.folds = 2;
  const auto mapped = simfeat::compute_mapped_features(ds, c.model.sim);
  std::size_t calls = 0;
  const auto r = train_run(c, ds, mapped, 0, [&](const EpochStats&) { ++calls; });
  CHECK(calls == 1);
  REQUIRE(r.stats.epochs.size() == 1);
  const auto& e = r.stats.epochs[0];
  CHECK(e.epoch == 1);
  CHECK(e.train_acc >= 0.0);
  CHECK(e.train_acc <= 1.0);
  CHECK(e.val_acc >= 0.0);
  CHECK(e.val_acc <= 1.0);
  CHECK(e.clusters[0] >= 1.0);
  CHECK(e.clusters[0] <= 8.0);
  CHECK(e.clusters[1] >= 1.0);
  CHECK(e.clusters[1] <= 4.0);
  CHECK(r.model != nullptr);
  CHECK_THROWS_AS(train_run(c, ds, mapped, 2), ArgumentError);
}

TEST_CASE("training is deterministic and the CSV replays exactly") {
  const TrainConfig c = toy_config(3, 5);
  const auto a = train_run(c, toy(), toy_mapped(), 1);
  const auto b = train_run(c, toy(), toy_mapped(), 1);
  CHECK(a.stats.epochs == b.stats.epochs);
  CHECK(a.stats.initial_val_acc == b.stats.initial_val_acc);
  std::ostringstream csv;
  write_stats_csv(csv, a.stats.epochs);
  CHECK(csv.str().rfind(std::string(kStatsHeader) + "\n", 0) == 0);
  CHECK(parse_stats_csv(csv.str()) == a.stats.epochs);
  CHECK_THROWS_AS(parse_stats_csv("epoch,oops\n"), FormatError);
  CHECK_THROWS_AS(parse_stats_csv(std::string(kStatsHeader) + "\n1,2,3\n"), FormatError);
}

TEST_CASE("best validation accuracy is at least the pre-training accuracy") {
  const auto r = train_run(toy_config(20, 2), toy(), toy_mapped(), 0);
  REQUIRE(r.stats.epochs.size() == 20);
  CHECK(r.stats.max_val_acc >= r.stats.initial_val_acc);
  CHECK(r.stats.best_epoch >= 1);
  CHECK(r.stats.epochs[r.stats.best_epoch - 1].val_acc == r.stats.max_val_acc);
}

TEST_CASE("uniformity weight does not reduce layer-0 cluster usage") {
  int holds = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig with = toy_config(10, seed), without = toy_config(10, seed);
    with.model.w_c = 1.0;
    without.model.w_c = 0.0;
    const auto a = train_run(with, toy(), toy_mapped(), 0);
    const auto b = train_run(without, toy(), toy_mapped(), 0);
    MESSAGE("seed " << seed << ": w_c=1 -> " << a.stats.epochs.back().clusters[0] << ", w_c=0 -> "
                    << b.stats.epochs.back().clusters[0]);
    if (a.stats.epochs.back().clusters[0] >= b.stats.epochs.back().clusters[0]) ++holds;
  }
  CHECK(holds >= 3);
}

TEST_CASE("divergence aborts with the last good epoch recorded") {
  TrainConfig c = toy_config(3, 1);
  c.learning_rate = 1e300;
  const auto r = train_run(c, toy(), toy_mapped(), 0);
  if (r.stats.aborted) {
    CHECK(r.stats.last_good_epoch < 3);
    CHECK(!r.stats.abort_reason.empty());
    CHECK(r.stats.epochs.size() == r.stats.last_good_epoch);
  } else {
    // Adam's step is bounded by lr in magnitude; any run that survives must still be finite.
    for (const auto& e : r.stats.epochs) CHECK(std::isfinite(e.task_loss));
  }
}

TEST_CASE("cross validation over two folds") {
  TrainConfig c = toy_config(2, 4);
  c.folds = 2;
  std::vector<std::size_t> seen;
  const auto cv = cross_validate(c, toy(), toy_mapped(), 2, [&](const TrainResult& r) { seen.push_back(r.stats.fold); });
  REQUIRE(cv.runs.size() == 2);
  CHECK(seen.size() == 2);
  const double expect = (cv.runs[0].max_val_acc + cv.runs[1].max_val_acc) / 2.0;
  CHECK(cv.summary.mean == doctest::Approx(expect).epsilon(1e-12));
  CHECK(!cv.summary.partial);
  const auto serial = cross_validate(c, toy(), toy_mapped(), 1);
  CHECK(serial.summary.fold_maxima == cv.summary.fold_maxima);
  const std::string json = aggregate_json(c, toy().content_hash, cv);
  CHECK(json.find("\"std_kind\": \"population\"") != std::string::npos);
  CHECK(json.find("\"batch_size\"") != std::string::npos);
}
