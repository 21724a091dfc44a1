#include "grada/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "grada/linalg.hpp"

namespace grada {

using ad::Var;

namespace {

void require_row_stochastic(const Tensor& p, const char* what) {
  if (p.rows() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      if (v < 0.0) throw std::invalid_argument(std::string(what) + ": negative probability in row " + std::to_string(i));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

}  // namespace

double kl_divergence(const Tensor& mu, const Tensor& log_sigma) {
  require_same_shape(mu, log_sigma, "kl_divergence");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s += mu[i] * mu[i] + std::exp(2.0 * log_sigma[i]) - 1.0 - 2.0 * log_sigma[i];
  return 0.5 * s;
}

ElboTerms elbo_loss(const Var& edge_logits, const Tensor& target, const Var& mu, const Var& log_sigma) {
  require_same_shape(edge_logits.value(), target, "elbo_loss");
  require_same_shape(mu.value(), log_sigma.value(), "elbo_loss");
  const std::size_t n = target.rows();
  if (mu.rows() != n)
    throw ShapeError("elbo_loss: latent rows " + std::to_string(mu.rows()) + " for " + std::to_string(n) + " nodes");

  ad::Tape& tape = edge_logits.tape();
  const double n2 = static_cast<double>(n * n);
  const double edges = sum(target);
  ElboTerms out;
  double pos_weight = 1.0, norm = 1.0;
  if (edges == 0.0) {
    out.edgeless = true;
  } else {
    pos_weight = (n2 - edges) / edges;
    norm = n2 / (2.0 * (n2 - edges));
  }

  Tensor weighted_pos = pos_weight * target;
  Tensor neg(n, n);
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = 1.0 - target[i];
  const Var ll = ad::mul(tape.constant(std::move(weighted_pos)), ad::log_sigmoid(edge_logits)) +
                 ad::mul(tape.constant(std::move(neg)), ad::log_sigmoid(-edge_logits));
  out.recon = ad::scale(ad::mean(ll), norm);

  const Var kl_sum = ad::sum(ad::add_scalar(ad::square(mu) + ad::exp(ad::scale(log_sigma, 2.0)), -1.0) -
                             ad::scale(log_sigma, 2.0));
  out.kl = ad::scale(kl_sum, 0.5 / static_cast<double>(n));
  out.elbo = out.recon - out.kl;
  return out;
}

ElboTerms elbo_batch(std::span<const Var> edge_logits, const GraphBatch& batch, const Var& mu,
                     const Var& log_sigma) {
  if (edge_logits.size() != batch.num_graphs() || batch.num_graphs() == 0)
    throw ShapeError("elbo_batch: " + std::to_string(edge_logits.size()) + " logit blocks for " +
                     std::to_string(batch.num_graphs()) + " graphs");
  std::vector<Var> recon, kl;
  bool edgeless = false;
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const auto [off, n] = batch.ranges()[g];
    ElboTerms t = elbo_loss(edge_logits[g], batch.block(g), ad::slice_rows(mu, off, n),
                            ad::slice_rows(log_sigma, off, n));
    recon.push_back(t.recon);
    kl.push_back(t.kl);
    edgeless = edgeless || t.edgeless;
  }
  ElboTerms out;
  out.recon = ad::mean(ad::concat_rows(recon));
  out.kl = ad::mean(ad::concat_rows(kl));
  out.elbo = out.recon - out.kl;
  out.edgeless = edgeless;
  return out;
}

Var entropy_reg(std::span<const std::pair<Var, const GraphBatch*>> latents) {
  std::vector<Var> per_graph;
  for (const auto& [z, batch] : latents) {
    if (z.rows() != batch->num_nodes()) throw ShapeError("entropy_reg: latent rows do not match batch");
    for (const auto& [off, n] : batch->ranges()) {
      const Var zk = ad::slice_rows(z, off, n);
      per_graph.push_back(ad::mean(ad::mul(ad::sigmoid(zk), ad::log_sigmoid(zk))));
    }
  }
  if (per_graph.empty()) throw std::invalid_argument("entropy_reg: no graphs");
  return ad::mean(ad::concat_rows(per_graph));
}

Var nwd_loss(const Var& p_source, const Var& p_target) {
  require_row_stochastic(p_source.value(), "nwd_loss(source)");
  require_row_stochastic(p_target.value(), "nwd_loss(target)");
  if (p_source.cols() != p_target.cols())
    throw ShapeError("nwd_loss: class counts differ " + p_source.value().shape_string() + " vs " +
                     p_target.value().shape_string());
  return ad::scale(ad::nuclear_norm(p_source), 1.0 / static_cast<double>(p_source.rows())) -
         ad::scale(ad::nuclear_norm(p_target), 1.0 / static_cast<double>(p_target.rows()));
}

Var cls_loss(const Var& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows(), k = logits.cols();
  if (labels.size() != m)
    throw ShapeError("cls_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
  if (m == 0) throw std::invalid_argument("cls_loss: empty batch");
  Tensor onehot(m, k);
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw std::out_of_range("cls_loss: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                              " outside [0, " + std::to_string(k) + ")");
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  const Var picked = ad::mul(logits.tape().constant(std::move(onehot)), ad::log_softmax_rows(logits));
  return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(m));
}

Var total_objective(ad::Tape& tape, const ObjectiveTerms& t, double lambda_e) {
  std::vector<Var> parts;
  if (t.cls.valid()) parts.push_back(t.cls);
  if (t.elbo.valid()) parts.push_back(-t.elbo);
  if (t.entropy.valid() && lambda_e != 0.0) parts.push_back(ad::scale(t.entropy, lambda_e));
  if (t.nwd_critic.valid()) parts.push_back(-t.nwd_critic);
  if (parts.empty()) return tape.constant(Tensor::scalar(0.0));
  Var total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = total + parts[i];
  return total;
}

CorrelationDiagnostics class_correlation_diagnostics(const Tensor& p) {
  const Tensor r = matmul_tn(p, p);
  CorrelationDiagnostics d;
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) (i == j ? d.intra : d.inter) += r(i, j);
  d.frobenius = frobenius_norm(p);
  d.nuclear = nuclear_norm(p);
  return d;
}

}  // namespace grada
