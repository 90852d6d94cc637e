#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace simpool {

struct GradCheckItem {
  std::string check;
  std::size_t graph = 0;
  std::size_t nodes = 0;
  double error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  double seconds = 0.0;

  bool passed() const;
  // Worst error per check name, in first-seen order.
  std::vector<std::pair<std::string, double>> worst() const;
  void print(std::ostream& out) const;
};

struct GradCheckOptions {
  std::string preset = "enzymes-paper";
  double scale = 0.03125;  // width-16 variant of enzymes-paper
  std::uint64_t seed = 7;
  std::size_t graphs = 20;
  std::size_t max_nodes = 10;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
};

// Finite-difference suite over the encoder, propagation, GCN, pooling,
// both regularisers and the full model, on seeded random graphs.
GradCheckReport run_gradcheck_suite(const GradCheckOptions& opts);

}  // namespace simpool
