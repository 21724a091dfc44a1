#pragma once

#include "grada/tensor.hpp"

namespace grada {

/// Thin singular value decomposition M = U·diag(S)·Vᵀ with r = min(m, n).
struct SvdResult {
  Tensor U;  ///< m x r, orthonormal columns
  Tensor S;  ///< 1 x r, non-negative, descending
  Tensor V;  ///< n x r, orthonormal columns
};

/// One-sided Jacobi SVD. Intended for the small matrices that appear as batch
/// prediction matrices; throws DomainError on non-finite input.
SvdResult svd(const Tensor& m);

/// Sum of singular values.
double nuclear_norm(const Tensor& m);

/// U_r·V_rᵀ built from the singular pairs whose value exceeds `cutoff`.
/// This is the subgradient of the nuclear norm used by the autodiff node.
Tensor nuclear_norm_subgradient(const SvdResult& decomposition, double cutoff = 1e-12);

}  // namespace grada
