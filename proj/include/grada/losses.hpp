#pragma once

#include <span>
#include <vector>

#include "grada/autodiff.hpp"
#include "grada/graph.hpp"

namespace grada {

/// Per-step values of every objective term.
struct LossReport {
  double recon = 0.0;  ///< reconstruction log-likelihood term (higher is better)
  double kl = 0.0;
  double elbo = 0.0;  ///< recon - kl
  double entropy_reg = 0.0;
  double cls = 0.0;
  double nwd = 0.0;
  double total = 0.0;  ///< value of the minimised scalar

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

struct ElboTerms {
  ad::Var recon;
  ad::Var kl;
  ad::Var elbo;
  bool edgeless = false;  ///< target had no edges; positive weight fell back to 1
};

/// Denoising ELBO of one graph. `edge_logits` are h_iᵀh_j; `target` is the
/// clean adjacency even when the latents were encoded from an augmented one.
///
/// recon = norm · mean_ij[ w·A_ij·log σ(x_ij) + (1 - A_ij)·log(1 - σ(x_ij)) ]
/// with w = (n² - ΣA)/ΣA and norm = n² / (2(n² - ΣA)), so a constant 0.5
/// prediction scores ln 0.5 whatever the sparsity.
/// kl = ½ Σ (μ² + σ² - 1 - 2 log σ) / n.
ElboTerms elbo_loss(const ad::Var& edge_logits, const Tensor& target, const ad::Var& mu, const ad::Var& log_sigma);

/// Mean ELBO terms over the graphs of a batch.
ElboTerms elbo_batch(std::span<const ad::Var> edge_logits, const GraphBatch& batch, const ad::Var& mu,
                     const ad::Var& log_sigma);

/// Closed-form KL(N(μ, σ²) || N(0, 1)) summed over entries, not normalised.
double kl_divergence(const Tensor& mu, const Tensor& log_sigma);

/// Mean over graphs of (1/(n_k F)) Σ σ(z) log σ(z). Each entry of `latents`
/// is one domain's latent matrix with the node ranges of its batch.
ad::Var entropy_reg(std::span<const std::pair<ad::Var, const GraphBatch*>> latents);

/// ‖P_s‖_* / b_s − ‖P_t‖_* / b_t on row-stochastic prediction matrices.
ad::Var nwd_loss(const ad::Var& p_source, const ad::Var& p_target);

/// Mean cross-entropy; throws std::out_of_range for labels outside [0, k).
ad::Var cls_loss(const ad::Var& logits, std::span<const int> labels);

/// Terms entering the minimised objective. Absent terms are left invalid.
/// `nwd_critic` must come from classifier outputs whose input passed through
/// grad_reverse: it enters with a minus sign so the classifier ascends L_nwd
/// while the reversed gradient makes the encoder descend it.
struct ObjectiveTerms {
  ad::Var cls;
  ad::Var elbo;
  ad::Var entropy;
  ad::Var nwd_critic;
};

/// L_cls − L_ELBO + λ_e·L_e − L_nwd(critic side). Returns a 1x1 constant 0
/// on `tape` when every term is absent.
ad::Var total_objective(ad::Tape& tape, const ObjectiveTerms& terms, double lambda_e);

struct CorrelationDiagnostics {
  double intra = 0.0;  ///< trace(PᵀP)
  double inter = 0.0;  ///< off-diagonal mass of PᵀP
  double frobenius = 0.0;
  double nuclear = 0.0;
};

CorrelationDiagnostics class_correlation_diagnostics(const Tensor& p);

}  // namespace grada
