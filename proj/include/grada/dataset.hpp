#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grada/graph.hpp"

namespace grada {

/// Raised by the dataset parser; the message names the record index and field.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kDatasetHeader = "grada-dataset v1";

struct LoadOptions {
  /// Ignore stored feature rows and recompute structural features.
  bool recompute_features = false;
};

std::vector<Graph> parse_dataset(std::istream& in, const LoadOptions& opts = {});
std::vector<Graph> load_dataset(const std::string& path, const LoadOptions& opts = {});

void write_dataset(std::ostream& out, const std::vector<Graph>& graphs, bool include_features = true);
void save_dataset(const std::string& path, const std::vector<Graph>& graphs, bool include_features = true);

/// Two-domain Erdős–Rényi benchmark. Class c graphs have edge density q_c in
/// the source and q_c + delta_density in the target; target features receive
/// additive N(0, sigma_shift²) noise after structural features are computed.
struct SynthSpec {
  std::size_t graphs_per_class = 100;
  std::size_t min_nodes = 12;
  std::size_t max_nodes = 24;
  double q0 = 0.1;
  double q1 = 0.25;
  double delta_density = 0.15;
  double sigma_shift = 0.5;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument when a (shifted) density leaves (0, 1).
  void validate() const;
};

struct SynthDomains {
  std::vector<Graph> source;
  std::vector<Graph> target;
};

SynthDomains generate_synthetic(const SynthSpec& spec);

/// F1 of `positive_class`; 0 when precision + recall is 0. Throws on empty or
/// mismatched input.
double f1_score(std::span<const int> predictions, std::span<const int> labels, int positive_class = 1);

/// Stratified by label when every graph is labelled, deterministic in `seed`.
std::pair<std::vector<Graph>, std::vector<Graph>> split(const std::vector<Graph>& dataset, double train_fraction,
                                                        std::uint64_t seed);

std::vector<int> labels_of(const std::vector<Graph>& graphs);

}  // namespace grada
