#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "grada/features.hpp"
#include "grada/graph.hpp"
#include "oracles.hpp"

using namespace grada;

namespace {

Graph make_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges, std::size_t k = 7) {
  Graph g;
  g.adjacency = adjacency_from_edges(n, edges);
  g.features = Tensor(n, k, 1.0);
  return g;
}

Tensor random_adjacency(std::size_t n, double p, Rng& rng) {
  std::bernoulli_distribution coin(p);
  Tensor a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

bool valid_adjacency(const Tensor& a) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0) return false;
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (a(i, j) != a(j, i) || (a(i, j) != 0.0 && a(i, j) != 1.0)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("graph validation") {
  CHECK_NOTHROW(validate_graph(make_graph(3, {{0, 1}, {1, 2}})));
  Graph g = make_graph(3, {{0, 1}});
  g.adjacency(0, 2) = 1.0;
  CHECK_THROWS(validate_graph(g));
  g = make_graph(3, {{0, 1}});
  g.adjacency(1, 1) = 1.0;
  CHECK_THROWS(validate_graph(g));
  g = make_graph(2, {{0, 1}});
  g.features(1, 3) = NAN;
  CHECK_THROWS(validate_graph(g));
  CHECK_THROWS(adjacency_from_edges(3, {{0, 3}}));
  CHECK_THROWS(adjacency_from_edges(3, {{1, 1}}));
  CHECK_THROWS(adjacency_from_edges(3, {{0, 1}, {1, 0}}));
}

TEST_CASE("augmentation identity and annihilation") {
  Rng rng(1);
  const Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
  CHECK(augment_adjacency(g, {0.0, 0.0}, rng) == g.adjacency);
  CHECK(augment_adjacency(g, {0.0, 1.0}, rng) == Tensor(5, 5));
}

TEST_CASE("augmentation on a triangle keeps 2.7 edges on average") {
  Rng rng(2024);
  const Graph tri = make_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  double total = 0.0;
  constexpr int kTrials = 10000;
  for (int t = 0; t < kTrials; ++t) total += sum(augment_adjacency(tri, {0.0, 0.1}, rng)) / 2.0;
  CHECK(std::abs(total / kTrials - 2.7) <= 0.05);
}

TEST_CASE("augmentation frequencies over 1e4 trials") {
  Rng rng(77);
  const Graph g = make_graph(10, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {0, 9}, {2, 7}});
  const AugmentConfig cfg{0.1, 0.1};
  double dropped = 0, added = 0, edges = 0, non_edges = 0;
  for (int t = 0; t < 10000; ++t) {
    const Tensor a = augment_adjacency(g, cfg, rng);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = i + 1; j < 10; ++j) {
        if (g.adjacency(i, j) != 0.0) {
          edges += 1;
          dropped += a(i, j) == 0.0;
        } else {
          non_edges += 1;
          added += a(i, j) != 0.0;
        }
      }
  }
  CHECK(std::abs(dropped / edges - cfg.p_drop) <= 0.02);
  CHECK(std::abs(added / non_edges - cfg.p_add * g.edge_density()) <= 0.02);
}

TEST_CASE("augmentation output is always a valid adjacency and is seed-deterministic") {
  Rng pick(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor adj = random_adjacency(2 + trial % 12, u(pick), pick);
    const AugmentConfig cfg{u(pick) * 3.0, u(pick)};
    Rng a(trial), b(trial);
    const Tensor x = augment_adjacency(adj, cfg, a);
    CHECK(valid_adjacency(x));
    CHECK(x == augment_adjacency(adj, cfg, b));
  }
}

TEST_CASE("batch_graphs builds block-diagonal batches") {
  const Graph a = make_graph(2, {{0, 1}});
  const Graph b = make_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  const GraphBatch batch = batch_graphs(std::vector<Graph>{a, b});
  const Tensor adj = batch.adjacency();
  REQUIRE(adj.rows() == 5);
  CHECK(batch.num_nodes() == 5);
  CHECK(batch.ranges()[0].offset == 0);
  CHECK(batch.ranges()[1].offset == 2);
  CHECK(batch.ranges()[1].count == 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 2; j < 5; ++j) {
      CHECK(adj(i, j) == 0.0);
      CHECK(adj(j, i) == 0.0);
    }
  CHECK(sum(adj) == sum(a.adjacency) + sum(b.adjacency));

  const GraphBatch single = batch_graphs(std::vector<Graph>{b});
  CHECK(single.adjacency() == b.adjacency);
  CHECK(single.features() == b.features);

  Graph c = make_graph(2, {{0, 1}}, 3);
  CHECK_THROWS_AS(batch_graphs(std::vector<Graph>{a, c}), ShapeError);
  CHECK_THROWS(batch_graphs(std::vector<Graph>{}));
}

TEST_CASE("unlabeled batches carry no labels") {
  Graph a = make_graph(2, {{0, 1}});
  a.label = 1;
  const GraphBatch batch = batch_graphs(std::vector<Graph>{a, a});
  CHECK(batch.labels()[0] == 1);
  const UnlabeledBatch u(batch);
  for (const auto& l : u.graphs().labels()) CHECK_FALSE(l.has_value());
}

TEST_CASE("augment_batch acts block by block") {
  Rng rng(4);
  const GraphBatch batch =
      batch_graphs(std::vector<Graph>{make_graph(4, {{0, 1}, {2, 3}}), make_graph(3, {{0, 1}, {1, 2}})});
  const std::vector<Tensor> blocks = augment_batch(batch, {0.0, 0.0}, rng);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == batch.block(0));
  CHECK(blocks[1] == batch.block(1));
  const GraphBatch swapped = batch.with_blocks(augment_batch(batch, {0.0, 1.0}, rng));
  CHECK(sum(swapped.adjacency()) == 0.0);
  CHECK(swapped.features() == batch.features());
}

TEST_CASE("node features of a triangle") {
  const Tensor tri = adjacency_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  const Tensor f = compute_node_features(tri);
  REQUIRE(f.cols() == kNumNodeFeatures);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(f(i, 0) == 2.0);
    CHECK(f(i, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(f(i, 2) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(f(i, 3) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(f(i, 4) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(f(i, 5) == 1.0);
    CHECK(f(i, 6) == 2.0);
  }
}

TEST_CASE("star centre has zero clustering") {
  const Tensor star = adjacency_from_edges(3, {{0, 1}, {0, 2}});
  const std::vector<double> cc = clustering_coefficient(star);
  CHECK(cc[0] == 0.0);
  CHECK(cc[1] == 0.0);
}

TEST_CASE("path graph pagerank and coreness against oracles") {
  const Tensor path = adjacency_from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  const std::vector<double> pr = pagerank(path);
  const std::vector<double> ref = oracle::pagerank(path, 0.85, 200);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(pr[i] - ref[i]) < 1e-8);
  CHECK(coreness(path) == std::vector<double>(5, 1.0));
  CHECK(coreness(path) == oracle::coreness(path));
}

TEST_CASE("feature invariants on random graphs") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 15;
    const Tensor adj = random_adjacency(n, u(rng), rng);
    const Tensor f = compute_node_features(adj);
    CHECK(f.all_finite());
    const std::vector<double> pr = pagerank(adj);
    CHECK(std::accumulate(pr.begin(), pr.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    const std::vector<double> ref = oracle::pagerank(adj, 0.85, 500);
    const std::vector<double> core = coreness(adj), core_ref = oracle::coreness(adj);
    const std::vector<double> deg = degree(adj);
    const double max_deg = *std::max_element(deg.begin(), deg.end());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pr[i] > 0.0);
      CHECK(std::abs(pr[i] - ref[i]) < 1e-8);
      CHECK(core[i] == core_ref[i]);
      CHECK(core[i] <= max_deg);
      CHECK(f(i, 5) >= 0.0);
      CHECK(f(i, 5) <= 1.0);
    }
    double hub = 0, auth = 0, eig = 0;
    for (std::size_t i = 0; i < n; ++i) {
      hub += f(i, 2) * f(i, 2);
      auth += f(i, 3) * f(i, 3);
      eig += f(i, 4) * f(i, 4);
    }
    if (sum(adj) > 0) {
      CHECK(hub == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(auth == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(eig == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("eigenvector centrality matches the dominant eigenvector of a connected graph") {
  const Tensor adj = adjacency_from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {3, 4}});
  const std::vector<double> ev = eigenvector_centrality(adj);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::to_eigen(adj));
  Eigen::VectorXd v = es.eigenvectors().col(4);
  if (v.sum() < 0) v = -v;
  for (int i = 0; i < 5; ++i) CHECK(std::abs(ev[i] - v(i)) < 1e-8);
}
