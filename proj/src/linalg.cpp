#include "grada/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grada {
namespace {

constexpr double kJacobiTol = 1e-15;
constexpr int kMaxSweeps = 100;

// Fills column `j` of `u` with a unit vector orthogonal to columns [0, j).
void complete_column(Tensor& u, std::size_t j) {
  const std::size_t m = u.rows();
  for (std::size_t e = 0; e < m; ++e) {
    std::vector<double> v(m, 0.0);
    v[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) d += u(i, k) * v[i];
        for (std::size_t i = 0; i < m; ++i) v[i] -= d * u(i, k);
      }
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm > 1e-6) {
      for (std::size_t i = 0; i < m; ++i) u(i, j) = v[i] / nrm;
      return;
    }
  }
}

// Requires rows >= cols.
SvdResult svd_tall(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor g = a;
  Tensor v = Tensor::identity(n);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += g(i, p) * g(i, p);
          beta += g(i, q) * g(i, q);
          gamma += g(i, p) * g(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double gp = g(i, p), gq = g(i, q);
          g(i, p) = c * gp - s * gq;
          g(i, q) = s * gp + c * gq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += g(i, j) * g(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{Tensor(m, n), Tensor(1, n), Tensor(n, n)};
  const double smax = n == 0 ? 0.0 : sigma[order[0]];
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.S(0, j) = sigma[src];
    for (std::size_t i = 0; i < n; ++i) out.V(i, j) = v(i, src);
    if (sigma[src] > 1e-14 * smax && sigma[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.U(i, j) = g(i, src) / sigma[src];
    } else {
      complete_column(out.U, j);
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Tensor& m) {
  if (!m.all_finite()) throw DomainError("svd: matrix " + m.shape_string() + " has non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);
  SvdResult t = svd_tall(transpose(m));
  return SvdResult{std::move(t.V), std::move(t.S), std::move(t.U)};
}

double nuclear_norm(const Tensor& m) { return sum(svd(m).S); }

Tensor nuclear_norm_subgradient(const SvdResult& d, double cutoff) {
  const std::size_t r = d.S.cols();
  Tensor out(d.U.rows(), d.V.rows());
  for (std::size_t k = 0; k < r; ++k) {
    if (d.S(0, k) <= cutoff) continue;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const double uik = d.U(i, k);
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += uik * d.V(j, k);
    }
  }
  return out;
}

}  // namespace grada
