#pragma once

#include <cstddef>
#include <vector>

#include "grada/tensor.hpp"

namespace grada {

/// Column order of compute_node_features.
enum class NodeFeature : std::size_t {
  kCoreness = 0,
  kPageRank,
  kHub,
  kAuthority,
  kEigenvectorCentrality,
  kClusteringCoefficient,
  kDegree,
};
inline constexpr std::size_t kNumNodeFeatures = 7;

std::vector<double> coreness(const Tensor& adjacency);
/// Power iteration with uniform teleport; dangling mass is spread uniformly.
std::vector<double> pagerank(const Tensor& adjacency, double damping = 0.85);
/// Principal eigenvector of A (computed on A + I), L2-normalised.
std::vector<double> eigenvector_centrality(const Tensor& adjacency);
struct HitsScores {
  std::vector<double> hub;
  std::vector<double> authority;
};
HitsScores hits(const Tensor& adjacency);
/// Local clustering coefficient; 0 for nodes of degree < 2.
std::vector<double> clustering_coefficient(const Tensor& adjacency);
std::vector<double> degree(const Tensor& adjacency);

/// n x 7 matrix: coreness, pagerank, hub, authority, eigenvector centrality,
/// clustering coefficient, degree.
Tensor compute_node_features(const Tensor& adjacency);

}  // namespace grada
