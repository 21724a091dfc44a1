#include "grada/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace grada {

std::size_t Graph::num_edges() const {
  std::size_t e = 0;
  const std::size_t n = num_nodes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adjacency(i, j) != 0.0) ++e;
  return e;
}

double Graph::edge_density() const {
  const double n = static_cast<double>(num_nodes());
  if (n < 2) return 0.0;
  return static_cast<double>(num_edges()) / (n * (n - 1) / 2.0);
}

Tensor adjacency_from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Tensor a(n, n);
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) throw std::out_of_range("edge endpoint out of range");
    if (i == j) throw std::invalid_argument("self-loop " + std::to_string(i));
    if (a(i, j) != 0.0) throw std::invalid_argument("duplicate edge " + std::to_string(i) + " " + std::to_string(j));
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

void validate_adjacency(const Tensor& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("adjacency is not square: " + a.shape_string());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0) throw std::invalid_argument("adjacency has a self-loop at node " + std::to_string(i));
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") is not binary");
      if (v != a(j, i))
        throw std::invalid_argument("adjacency is not symmetric at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
    }
  }
}

void validate_graph(const Graph& g) {
  if (g.num_nodes() == 0) throw std::invalid_argument("graph '" + g.id + "' has no nodes");
  validate_adjacency(g.adjacency);
  if (g.features.rows() != g.num_nodes())
    throw std::invalid_argument("graph '" + g.id + "' has " + std::to_string(g.features.rows()) +
                                " feature rows for " + std::to_string(g.num_nodes()) + " nodes");
  if (!g.features.all_finite()) throw std::invalid_argument("graph '" + g.id + "' has non-finite features");
}

Tensor augment_adjacency(const Graph& g, const AugmentConfig& cfg, Rng& rng) {
  return augment_adjacency(g.adjacency, cfg, rng);
}

Tensor augment_adjacency(const Tensor& adjacency, const AugmentConfig& cfg, Rng& rng) {
  const std::size_t n = adjacency.rows();
  std::size_t edges = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adjacency(i, j) != 0.0) ++edges;
  const double density = n < 2 ? 0.0 : static_cast<double>(edges) / (static_cast<double>(n) * (n - 1) / 2.0);
  const double p_keep = 1.0 - std::clamp(cfg.p_drop, 0.0, 1.0);
  const double p_add = std::clamp(cfg.p_add * density, 0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool keep = unif(rng) < p_keep;
      const bool add = unif(rng) < p_add;
      const double v = std::min(1.0, (adjacency(i, j) != 0.0 && keep ? 1.0 : 0.0) + (add ? 1.0 : 0.0));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Tensor GraphBatch::adjacency() const {
  Tensor a(num_nodes(), num_nodes());
  for (std::size_t k = 0; k < ranges_.size(); ++k) {
    const auto [off, cnt] = ranges_[k];
    for (std::size_t i = 0; i < cnt; ++i)
      for (std::size_t j = 0; j < cnt; ++j) a(off + i, off + j) = blocks_[k](i, j);
  }
  return a;
}

GraphBatch GraphBatch::with_blocks(std::vector<Tensor> blocks) const {
  if (blocks.size() != blocks_.size()) throw ShapeError("with_blocks: block count mismatch");
  for (std::size_t k = 0; k < blocks.size(); ++k) require_same_shape(blocks[k], blocks_[k], "with_blocks");
  GraphBatch out = *this;
  out.blocks_ = std::move(blocks);
  return out;
}

GraphBatch GraphBatch::without_labels() const {
  GraphBatch out = *this;
  std::fill(out.labels_.begin(), out.labels_.end(), std::nullopt);
  return out;
}

GraphBatch batch_graphs(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw ShapeError("batch_graphs: empty graph list");
  const std::size_t k = graphs.front()->features.cols();
  std::size_t total = 0;
  for (const Graph* g : graphs) {
    if (g->features.cols() != k)
      throw ShapeError("batch_graphs: feature dimension " + std::to_string(g->features.cols()) + " of graph '" +
                       g->id + "' does not match " + std::to_string(k));
    total += g->num_nodes();
  }
  GraphBatch b;
  b.features_ = Tensor(total, k);
  std::size_t off = 0;
  for (const Graph* g : graphs) {
    b.ranges_.push_back({off, g->num_nodes()});
    b.blocks_.push_back(g->adjacency);
    b.labels_.push_back(g->label);
    b.ids_.push_back(g->id);
    std::copy(g->features.data().begin(), g->features.data().end(), b.features_.data().begin() + off * k);
    off += g->num_nodes();
  }
  return b;
}

GraphBatch batch_graphs(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return batch_graphs(ptrs);
}

std::vector<Tensor> augment_batch(const GraphBatch& batch, const AugmentConfig& cfg, Rng& rng) {
  std::vector<Tensor> out;
  out.reserve(batch.num_graphs());
  for (const Tensor& block : batch.blocks()) out.push_back(augment_adjacency(block, cfg, rng));
  return out;
}

}  // namespace grada
