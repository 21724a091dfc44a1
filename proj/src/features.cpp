#include "grada/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace grada {
namespace {

constexpr double kPowerTol = 1e-10;
constexpr int kPowerMaxIter = 1000;

std::vector<double> mat_vec(const Tensor& a, const std::vector<double>& x) {
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

bool normalize_l2(std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  s = std::sqrt(s);
  if (s == 0.0) return false;
  for (double& v : x) v /= s;
  return true;
}

double max_change(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Iterates x <- normalize(step(x)) from a uniform positive start.
std::vector<double> power_iterate(std::size_t n, const std::function<std::vector<double>(const std::vector<double>&)>& step) {
  std::vector<double> x(n, 1.0);
  normalize_l2(x);
  for (int it = 0; it < kPowerMaxIter; ++it) {
    std::vector<double> next = step(x);
    if (!normalize_l2(next)) return std::vector<double>(n, 0.0);
    const double delta = max_change(next, x);
    x = std::move(next);
    if (delta < kPowerTol) break;
  }
  return x;
}

}  // namespace

std::vector<double> degree(const Tensor& a) {
  std::vector<double> d(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d[i] += a(i, j);
  return d;
}

std::vector<double> coreness(const Tensor& a) {
  const std::size_t n = a.rows();
  std::vector<double> deg = degree(a);
  std::vector<int> d(deg.begin(), deg.end());
  std::vector<bool> removed(n, false);
  std::vector<double> core(n, 0.0);
  int k = 0;
  for (std::size_t done = 0; done < n; ++done) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!removed[i] && (best == n || d[i] < d[best])) best = i;
    k = std::max(k, d[best]);
    core[best] = k;
    removed[best] = true;
    for (std::size_t j = 0; j < n; ++j)
      if (!removed[j] && a(best, j) != 0.0) --d[j];
  }
  return core;
}

std::vector<double> pagerank(const Tensor& a, double damping) {
  const std::size_t n = a.rows();
  if (n == 0) return {};
  const std::vector<double> deg = degree(a);
  std::vector<double> x(n, 1.0 / n);
  for (int it = 0; it < kPowerMaxIter; ++it) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (deg[i] == 0.0) dangling += x[i];
    std::vector<double> next(n, (1.0 - damping) / n + damping * dangling / n);
    for (std::size_t j = 0; j < n; ++j) {
      if (deg[j] == 0.0) continue;
      const double share = damping * x[j] / deg[j];
      for (std::size_t i = 0; i < n; ++i)
        if (a(j, i) != 0.0) next[i] += share;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - x[i]);
    x = std::move(next);
    if (change < 1e-14) break;
  }
  return x;
}

std::vector<double> eigenvector_centrality(const Tensor& a) {
  // A + I has the same eigenvectors as A but no bipartite oscillation.
  return power_iterate(a.rows(), [&](const std::vector<double>& x) {
    std::vector<double> y = mat_vec(a, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
  });
}

HitsScores hits(const Tensor& a) {
  const Tensor at = transpose(a);
  HitsScores s;
  s.authority = power_iterate(a.rows(), [&](const std::vector<double>& auth) {
    return mat_vec(at, mat_vec(a, auth));
  });
  s.hub = mat_vec(a, s.authority);
  if (!normalize_l2(s.hub)) s.hub.assign(a.rows(), 0.0);
  return s;
}

std::vector<double> clustering_coefficient(const Tensor& a) {
  const std::size_t n = a.rows();
  std::vector<double> cc(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> nb;
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) != 0.0) nb.push_back(j);
    if (nb.size() < 2) continue;
    double links = 0.0;
    for (std::size_t p = 0; p < nb.size(); ++p)
      for (std::size_t q = p + 1; q < nb.size(); ++q)
        if (a(nb[p], nb[q]) != 0.0) links += 1.0;
    const double k = static_cast<double>(nb.size());
    cc[i] = links / (k * (k - 1) / 2.0);
  }
  return cc;
}

Tensor compute_node_features(const Tensor& a) {
  const std::size_t n = a.rows();
  const auto core = coreness(a);
  const auto pr = pagerank(a);
  const auto h = hits(a);
  const auto ev = eigenvector_centrality(a);
  const auto cc = clustering_coefficient(a);
  const auto deg = degree(a);
  Tensor x(n, kNumNodeFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = core[i];
    x(i, 1) = pr[i];
    x(i, 2) = h.hub[i];
    x(i, 3) = h.authority[i];
    x(i, 4) = ev[i];
    x(i, 5) = cc[i];
    x(i, 6) = deg[i];
  }
  return x;
}

}  // namespace grada
