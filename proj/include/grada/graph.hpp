#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grada/tensor.hpp"

namespace grada {

using Rng = std::mt19937_64;

/// Undirected, unweighted graph with per-node features and an optional class label.
struct Graph {
  std::string id;
  Tensor adjacency;  ///< n x n, symmetric, binary, zero diagonal
  Tensor features;   ///< n x K
  std::optional<int> label;

  std::size_t num_nodes() const { return adjacency.rows(); }
  std::size_t num_edges() const;
  /// Fraction of off-diagonal unordered pairs that are edges.
  double edge_density() const;
};

/// Builds an n x n adjacency matrix from undirected edge pairs.
Tensor adjacency_from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// Throws std::invalid_argument describing the first violated invariant.
void validate_adjacency(const Tensor& adjacency);
void validate_graph(const Graph& g);

struct AugmentConfig {
  double p_add = 0.1;
  double p_drop = 0.1;
};

/// Random edge dropping/adding: A° = min(1, keep ⊙ A + add) where keep ~
/// Bernoulli(1 - p_drop) and add ~ Bernoulli(p_add * density(A)). Both masks
/// are drawn once per unordered pair and mirrored.
Tensor augment_adjacency(const Graph& g, const AugmentConfig& cfg, Rng& rng);
Tensor augment_adjacency(const Tensor& adjacency, const AugmentConfig& cfg, Rng& rng);

struct NodeRange {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Block-diagonal merge of several graphs. Blocks are kept separately; the
/// merged adjacency is materialised on demand.
class GraphBatch {
 public:
  GraphBatch() = default;

  std::size_t num_graphs() const { return ranges_.size(); }
  std::size_t num_nodes() const { return features_.rows(); }
  std::size_t feature_dim() const { return features_.cols(); }
  const std::vector<NodeRange>& ranges() const { return ranges_; }
  const Tensor& features() const { return features_; }
  /// Adjacency of graph k.
  const Tensor& block(std::size_t k) const { return blocks_[k]; }
  const std::vector<Tensor>& blocks() const { return blocks_; }
  const std::vector<std::optional<int>>& labels() const { return labels_; }
  const std::vector<std::string>& ids() const { return ids_; }

  Tensor adjacency() const;
  /// Same batch with each block replaced; shapes must match.
  GraphBatch with_blocks(std::vector<Tensor> blocks) const;
  GraphBatch without_labels() const;

 private:
  friend GraphBatch batch_graphs(const std::vector<const Graph*>& graphs);
  std::vector<Tensor> blocks_;
  Tensor features_;
  std::vector<NodeRange> ranges_;
  std::vector<std::optional<int>> labels_;
  std::vector<std::string> ids_;
};

/// Throws ShapeError on mixed feature dimensions or an empty list.
GraphBatch batch_graphs(const std::vector<const Graph*>& graphs);
GraphBatch batch_graphs(const std::vector<Graph>& graphs);

/// A batch whose labels have been stripped. Training code takes target-domain
/// data only in this form.
class UnlabeledBatch {
 public:
  explicit UnlabeledBatch(const GraphBatch& batch) : batch_(batch.without_labels()) {}
  const GraphBatch& graphs() const { return batch_; }

 private:
  GraphBatch batch_;
};

/// Augments every block of a batch independently.
std::vector<Tensor> augment_batch(const GraphBatch& batch, const AugmentConfig& cfg, Rng& rng);

}  // namespace grada
