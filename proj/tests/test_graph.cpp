#include <doctest.h>

#include <map>
#include <numeric>
#include <set>

#include "simpool/errors.hpp"
#include "simpool/io.hpp"
#include "simpool/graph.hpp"
#include "support.hpp"

using namespace simpool;
using testsupport::TempDir;
using testsupport::TuGraph;
using testsupport::write_text;
using testsupport::write_tu;

namespace {

Dataset sized_dataset(const std::vector<std::size_t>& sizes, std::size_t classes = 2) {
  Dataset ds;
  ds.name = "sized";
  ds.num_classes = classes;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    Graph g;
    g.node_count = sizes[i];
    g.adjacency.resize(static_cast<Eigen::Index>(sizes[i]), static_cast<Eigen::Index>(sizes[i]));
    g.node_features = Matrix::Ones(static_cast<Eigen::Index>(sizes[i]), 1);
    g.label = i % classes;
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace

TEST_CASE("smallest well-formed TU input") {
  TempDir dir;
  write_tu(dir.path(), "ONE", {TuGraph{2, {{0, 1}}, 1, {}}});
  const auto ds = load_tu_dataset(dir.path(), "ONE");
  REQUIRE(ds.graphs.size() == 1);
  CHECK(ds.num_classes == 1);
  const auto& g = ds.graphs[0];
  CHECK(g.node_count == 2);
  const Matrix a = g.dense_adjacency();
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == 1.0);
  CHECK(a(0, 0) == 0.0);
  CHECK(ds.feature_kind == FeatureKind::NormalisedDegree);
  CHECK(g.node_features(0, 0) == 1.0);
}

TEST_CASE("loader symmetrises, collapses duplicates and remaps labels") {
  TempDir dir;
  // Edge (0,1) listed in both directions plus a duplicate; one-directional (1,2).
  write_tu(dir.path(), "T", {TuGraph{3, {{0, 1}, {1, 0}, {0, 1}, {1, 2}}, 7, {3, 5, 3}},
                             TuGraph{2, {{0, 1}}, -1, {5, 9}}});
  const auto ds = load_tu_dataset(dir.path(), "T");
  REQUIRE(ds.graphs.size() == 2);
  CHECK(ds.num_classes == 2);
  CHECK(ds.graphs[0].label == 1);  // sorted: -1 -> 0, 7 -> 1
  CHECK(ds.graphs[1].label == 0);
  const Matrix a = ds.graphs[0].dense_adjacency();
  CHECK(a == a.transpose());
  CHECK(a(0, 1) == 1.0);
  CHECK(a(2, 1) == 1.0);
  CHECK(a.sum() == 4.0);
  CHECK(ds.feature_kind == FeatureKind::NodeLabelOneHot);
  CHECK(ds.feature_dim() == 3);  // node labels {3, 5, 9}
  CHECK(ds.graphs[0].node_features.row(1).sum() == 1.0);
  CHECK(ds.graphs[0].node_features(1, 1) == 1.0);
  CHECK(ds.graphs[1].node_features(1, 2) == 1.0);
  CHECK(ds.mean_node_count() == doctest::Approx(2.5));
  CHECK(ds.mean_edge_count() == doctest::Approx(1.5));
}

TEST_CASE("degree features are normalised by the dataset maximum") {
  TempDir dir;
  write_tu(dir.path(), "D", {TuGraph{4, {{0, 1}, {0, 2}, {0, 3}}, 0, {}}, TuGraph{2, {{0, 1}}, 1, {}}});
  const auto ds = load_tu_dataset(dir.path(), "D");
  CHECK(ds.graphs[0].node_features(0, 0) == doctest::Approx(1.0));
  CHECK(ds.graphs[0].node_features(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(ds.graphs[1].node_features(0, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("loader error paths") {
  TempDir dir;
  SUBCASE("missing mandatory file") {
    write_tu(dir.path(), "M", {TuGraph{2, {{0, 1}}, 1, {}}});
    std::filesystem::remove(dir.path() / "M_graph_labels.txt");
    CHECK_THROWS_AS(load_tu_dataset(dir.path(), "M"), FormatError);
  }
  SUBCASE("edge crossing graphs") {
    write_text(dir.path() / "X_A.txt", "1,3\n");
    write_text(dir.path() / "X_graph_indicator.txt", "1\n1\n2\n2\n");
    write_text(dir.path() / "X_graph_labels.txt", "0\n1\n");
    CHECK_THROWS_AS(load_tu_dataset(dir.path(), "X"), IntegrityError);
  }
  SUBCASE("edge to a node that does not exist") {
    write_text(dir.path() / "X_A.txt", "1,9\n");
    write_text(dir.path() / "X_graph_indicator.txt", "1\n1\n");
    write_text(dir.path() / "X_graph_labels.txt", "0\n");
    CHECK_THROWS_AS(load_tu_dataset(dir.path(), "X"), IntegrityError);
  }
  SUBCASE("non-contiguous indicator") {
    write_text(dir.path() / "X_A.txt", "1,2\n");
    write_text(dir.path() / "X_graph_indicator.txt", "1\n2\n1\n");
    write_text(dir.path() / "X_graph_labels.txt", "0\n1\n");
    CHECK_THROWS_AS(load_tu_dataset(dir.path(), "X"), IntegrityError);
  }
  SUBCASE("garbage token") {
    write_text(dir.path() / "X_A.txt", "1,two\n");
    write_text(dir.path() / "X_graph_indicator.txt", "1\n1\n");
    write_text(dir.path() / "X_graph_labels.txt", "0\n");
    CHECK_THROWS_AS(load_tu_dataset(dir.path(), "X"), FormatError);
  }
}

TEST_CASE("content hash changes with the files") {
  TempDir a, b;
  write_tu(a.path(), "H", {TuGraph{2, {{0, 1}}, 1, {}}});
  write_tu(b.path(), "H", {TuGraph{3, {{0, 1}}, 1, {}}});
  const auto da = load_tu_dataset(a.path(), "H");
  CHECK(da.content_hash == load_tu_dataset(a.path(), "H").content_hash);
  CHECK(da.content_hash != load_tu_dataset(b.path(), "H").content_hash);
}

TEST_CASE("SPG1 cache round-trip is bit-identical") {
  const auto ds = testsupport::toy_dataset(12, 3);
  TempDir dir;
  const auto path = dir.path() / "toy.spg";
  save_dataset_cache(ds, path);
  const auto back = load_dataset_cache(path);
  REQUIRE(back.graphs.size() == ds.graphs.size());
  CHECK(back.name == ds.name);
  CHECK(back.content_hash == ds.content_hash);
  CHECK(back.num_classes == ds.num_classes);
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    CHECK(back.graphs[i].dense_adjacency() == ds.graphs[i].dense_adjacency());
    CHECK(back.graphs[i].node_features == ds.graphs[i].node_features);
    CHECK(back.graphs[i].label == ds.graphs[i].label);
  }

  SUBCASE("truncated file") {
    const auto bytes = io::read_file(path);
    io::atomic_write(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_dataset_cache(path), FormatError);
  }
  SUBCASE("wrong magic") {
    auto bytes = io::read_file(path);
    bytes[0] = 'X';
    io::atomic_write(path, bytes);
    CHECK_THROWS_AS(load_dataset_cache(path), FormatError);
  }
}

TEST_CASE("loaded symmetric datasets satisfy A == A^T") {
  const auto ds = testsupport::toy_dataset(20, 11);
  for (const auto& g : ds.graphs) {
    const Matrix a = g.dense_adjacency();
    CHECK(a == a.transpose());
  }
}

TEST_CASE("make_batches") {
  SUBCASE("N_max is the largest graph") {
    const auto ds = sized_dataset({2, 3, 5});
    const auto batches = make_batches(ds, 3);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].max_nodes == 5);
    const auto& b = batches[0];
    for (std::size_t g = 0; g < 3; ++g) {
      CHECK(b.adjacency[g].rows() == 5);
      CHECK(b.features[g].rows() == 5);
      CHECK(b.node_mask[g].sum() == doctest::Approx(static_cast<double>(b.node_counts[g])));
      // ones are leading, padding rows of features are zero
      for (Eigen::Index i = 0; i < 5; ++i) {
        const bool real = static_cast<std::size_t>(i) < b.node_counts[g];
        CHECK(b.node_mask[g](i) == (real ? 1.0 : 0.0));
        if (!real) CHECK(b.features[g].row(i).isZero(0.0));
      }
    }
  }
  SUBCASE("595 graphs in batches of 32") {
    const auto ds = sized_dataset(std::vector<std::size_t>(595, 2));
    const auto batches = make_batches(ds, 32, 1);
    // ceil(595 / 32) = 19 and 595 - 18 * 32 = 19
    CHECK(batches.size() == (595 + 31) / 32);
    CHECK(batches.size() == 19);
    CHECK(batches.back().size() == 595 - 18 * 32);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.graph_indices.begin(), b.graph_indices.end());
    CHECK(seen.size() == 595);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 595);
  }
  SUBCASE("deterministic under a seed") {
    const auto ds = sized_dataset(std::vector<std::size_t>(50, 3));
    const auto a = make_batches(ds, 7, 42), b = make_batches(ds, 7, 42), c = make_batches(ds, 7, 43);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].graph_indices == b[i].graph_indices);
      differs = differs || a[i].graph_indices != c[i].graph_indices;
    }
    CHECK(differs);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(make_batches(sized_dataset({2}), 0), ArgumentError);
    CHECK_THROWS_AS(make_batches(sized_dataset({}), 4), ArgumentError);
  }
}

TEST_CASE("kfold_split") {
  SUBCASE("10 graphs, 5 folds") {
    const auto folds = kfold_split(sized_dataset(std::vector<std::size_t>(10, 2)), 5, 0);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
      CHECK(f.validation.size() == 2);
      CHECK(f.train.size() == 8);
    }
  }
  SUBCASE("595 graphs, 10 folds, 6 classes") {
    const auto ds = sized_dataset(std::vector<std::size_t>(595, 2), 6);
    const auto folds = kfold_split(ds, 10, 9);
    std::vector<std::size_t> all;
    std::map<std::size_t, std::size_t> class_total;
    for (const auto& g : ds.graphs) ++class_total[g.label];
    for (const auto& f : folds) {
      // 595 = 10 * 59 + 5: five folds of 60, five of 59
      CHECK((f.validation.size() == 59 || f.validation.size() == 60));
      std::set<std::size_t> v(f.validation.begin(), f.validation.end()), t(f.train.begin(), f.train.end());
      for (auto i : v) CHECK(t.count(i) == 0);
      CHECK(v.size() + t.size() == 595);
      std::map<std::size_t, std::size_t> hist;
      for (auto i : f.validation) ++hist[ds.graphs[i].label];
      for (const auto& [label, total] : class_total) {
        const double proportional = static_cast<double>(total) / 10.0;
        CHECK(std::abs(static_cast<double>(hist[label]) - proportional) <= 1.0);
      }
      all.insert(all.end(), f.validation.begin(), f.validation.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(595);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    CHECK(all == expect);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kfold_split(sized_dataset({2, 2, 2}), 4, 0), ArgumentError);
    CHECK_THROWS_AS(kfold_split(sized_dataset({2, 2, 2}), 1, 0), ArgumentError);
  }
}
