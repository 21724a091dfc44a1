#include "grada/selfcheck.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "grada/gradcheck.hpp"
#include "grada/graph.hpp"
#include "grada/linalg.hpp"
#include "grada/losses.hpp"
#include "grada/model.hpp"

namespace grada {
namespace {

using ad::Tape;
using ad::Var;

constexpr double kGradTol = 1e-5;

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so every
// output entry contributes a distinct sensitivity.
Var weighted_sum(Tape& tape, const Var& x, std::uint64_t salt) {
  Rng rng(salt);
  return ad::sum(ad::mul(x, tape.constant(random_tensor(x.rows(), x.cols(), rng))));
}

CheckResult grad_check(const std::string& name, const ScalarFn& f, const std::vector<Tensor>& inputs) {
  const GradCheckResult r = check_gradients(f, inputs);
  return {"gradient: " + name, r.relative_error < kGradTol, r.relative_error, kGradTol};
}

Tensor random_adjacency(std::size_t n, double p, Rng& rng) {
  std::bernoulli_distribution coin(p);
  Tensor a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

void primitive_checks(std::vector<CheckResult>& out, Rng& rng) {
  const Tensor a = random_tensor(3, 4, rng);
  const Tensor b = random_tensor(4, 2, rng);
  const Tensor pos = random_tensor(3, 4, rng, 0.2, 2.0);
  const Tensor row = random_tensor(1, 4, rng);
  Tensor mask(3, 4, 1.0);
  mask(0, 1) = mask(1, 3) = mask(2, 0) = 0.0;

  auto unary = [&](const std::string& name, std::function<Var(const Var&)> op, const Tensor& in) {
    out.push_back(grad_check(name, [op](Tape& t, std::span<const Var> x) { return weighted_sum(t, op(x[0]), 11); },
                             {in}));
  };
  out.push_back(grad_check("matmul", [](Tape& t, std::span<const Var> x) {
    return weighted_sum(t, ad::matmul(x[0], x[1]), 1);
  }, {a, b}));
  out.push_back(grad_check("add/sub/mul", [](Tape& t, std::span<const Var> x) {
    return weighted_sum(t, ad::mul(x[0] + x[1], x[0] - x[1]), 2);
  }, {a, pos}));
  out.push_back(grad_check("add_row", [](Tape& t, std::span<const Var> x) {
    return weighted_sum(t, ad::add_row(x[0], x[1]), 3);
  }, {a, row}));
  unary("transpose", [](const Var& x) { return ad::transpose(x); }, a);
  unary("sigmoid", [](const Var& x) { return ad::sigmoid(x); }, a);
  unary("log_sigmoid", [](const Var& x) { return ad::log_sigmoid(x); }, a);
  unary("exp", [](const Var& x) { return ad::exp(x); }, a);
  unary("log", [](const Var& x) { return ad::log(x); }, pos);
  unary("square", [](const Var& x) { return ad::square(x); }, a);
  unary("leaky_relu", [](const Var& x) { return ad::leaky_relu(x, 0.2); }, a);
  unary("elu", [](const Var& x) { return ad::elu(x); }, a);
  unary("clamp", [](const Var& x) { return ad::clamp(x, -0.5, 0.5); }, a);
  unary("softmax_rows", [](const Var& x) { return ad::softmax_rows(x); }, a);
  unary("log_softmax_rows", [](const Var& x) { return ad::log_softmax_rows(x); }, a);
  unary("masked_softmax_rows", [mask](const Var& x) { return ad::masked_softmax_rows(x, mask); }, a);
  unary("masked_fill", [mask](const Var& x) { return ad::masked_fill(x, mask, 3.0); }, a);
  unary("slice_rows", [](const Var& x) { return ad::slice_rows(x, 1, 2); }, a);
  unary("mean_rows", [](const Var& x) { return ad::mean_rows(x); }, a);
  unary("concat", [](const Var& x) {
    const std::array<Var, 2> rows{x, ad::square(x)};
    const std::array<Var, 2> cols{ad::concat_rows(rows), ad::concat_rows(rows)};
    return ad::concat_cols(cols);
  }, a);
  unary("mean", [](const Var& x) { return ad::mean(ad::square(x)); }, a);
  unary("nuclear_norm", [](const Var& x) { return ad::nuclear_norm(x); }, random_tensor(5, 3, rng));
}

void loss_checks(std::vector<CheckResult>& out, Rng& rng) {
  // NWD on softmax outputs.
  out.push_back(grad_check("nwd_loss", [](Tape&, std::span<const Var> x) {
    return nwd_loss(ad::softmax_rows(x[0]), ad::softmax_rows(x[1]));
  }, {random_tensor(6, 3, rng, -2, 2), random_tensor(5, 3, rng, -2, 2)}));

  const std::vector<int> labels{0, 2, 1, 1};
  out.push_back(grad_check("cls_loss", [labels](Tape&, std::span<const Var> x) { return cls_loss(x[0], labels); },
                           {random_tensor(4, 3, rng, -2, 2)}));

  const Tensor adj = random_adjacency(6, 0.4, rng);
  out.push_back(grad_check("elbo_loss", [adj](Tape&, std::span<const Var> x) {
    const Var h = x[0];
    return elbo_loss(ad::matmul(h, ad::transpose(h)), adj, x[1], x[2]).elbo;
  }, {random_tensor(6, 3, rng), random_tensor(6, 2, rng), random_tensor(6, 2, rng, -0.5, 0.5)}));

  std::vector<Graph> graphs(2);
  for (std::size_t k = 0; k < 2; ++k) {
    graphs[k].adjacency = random_adjacency(3 + k, 0.6, rng);
    graphs[k].features = Tensor(3 + k, 1);
  }
  const GraphBatch batch = batch_graphs(graphs);
  out.push_back(grad_check("entropy_reg", [&batch](Tape&, std::span<const Var> x) {
    const std::array<std::pair<Var, const GraphBatch*>, 1> latents{{{x[0], &batch}}};
    return entropy_reg(latents);
  }, {random_tensor(batch.num_nodes(), 3, rng, -3, 3)}));

  const Tensor features = random_tensor(batch.num_nodes(), 3, rng);
  out.push_back(grad_check("gat_forward", [&batch, features](Tape& t, std::span<const Var> x) {
    GatLayerVars p{x[0], x[1], 0.2};
    return weighted_sum(t, ad::elu(gat_forward(p, batch, batch.blocks(), t.constant(features))), 5);
  }, {random_tensor(3, 2, rng), random_tensor(4, 1, rng)}));
}

// Total objective with the reversal node: the classifier weight sees
// ∂L_cls − ∂L_nwd; the features see ∂L_cls + λ∂L_nwd.
void objective_checks(std::vector<CheckResult>& out, Rng& rng) {
  const Tensor xs = random_tensor(4, 3, rng), xt = random_tensor(5, 3, rng);
  const Tensor w = random_tensor(3, 2, rng, -2, 2);
  const std::vector<int> labels{0, 1, 1, 0};
  const double lambda = 0.7;

  auto build = [&](Tape& tape, const Var& vxs, const Var& vxt, const Var& vw, bool reversed) {
    ObjectiveTerms terms;
    terms.cls = cls_loss(ad::matmul(vxs, vw), labels);
    const Var fs = reversed ? ad::grad_reverse(vxs, lambda) : vxs;
    const Var ft = reversed ? ad::grad_reverse(vxt, lambda) : vxt;
    terms.nwd_critic = nwd_loss(ad::softmax_rows(ad::matmul(fs, vw)), ad::softmax_rows(ad::matmul(ft, vw)));
    return total_objective(tape, terms, 1.0);
  };

  // Classifier side: reversal does not touch w, so FD of the forward value applies.
  out.push_back(grad_check("total_objective (classifier weight)", [&](Tape& t, std::span<const Var> x) {
    return build(t, t.constant(xs), t.constant(xt), x[0], true);
  }, {w}));

  // Feature side: compare against FD of L_cls + λ L_nwd.
  const ScalarFn encoder_view = [&](Tape& t, std::span<const Var> x) {
    const Var vw = t.constant(w);
    const Var cls = cls_loss(ad::matmul(x[0], vw), labels);
    const Var nwd = nwd_loss(ad::softmax_rows(ad::matmul(x[0], vw)), ad::softmax_rows(ad::matmul(x[1], vw)));
    return cls + ad::scale(nwd, lambda);
  };
  Tape tape;
  const Var vxs = tape.variable(xs), vxt = tape.variable(xt);
  const ad::Gradients g = tape.backward(build(tape, vxs, vxt, tape.constant(w), true));
  Tape ref_tape;
  const Var rxs = ref_tape.variable(xs), rxt = ref_tape.variable(xt);
  const std::array<Var, 2> ref_in{rxs, rxt};
  const ad::Gradients rg = ref_tape.backward(encoder_view(ref_tape, ref_in));
  const GradCheckResult fd = check_gradients(encoder_view, {xs, xt});
  const double diff = std::max(max_abs_diff(g[vxs], rg[rxs]), max_abs_diff(g[vxt], rg[rxt]));
  const double scale = std::max(frobenius_norm(rg[rxs]) + frobenius_norm(rg[rxt]), 1e-12);
  const double err = std::max(diff / scale, fd.relative_error);
  out.push_back({"gradient: total_objective (reversed feature path)", err < kGradTol, err, kGradTol});
}

void grl_checks(std::vector<CheckResult>& out, Rng& rng) {
  const Tensor x = random_tensor(2, 3, rng), w = random_tensor(2, 3, rng);
  auto grad_through = [&](int reversals, double lambda) {
    Tape t;
    const Var vx = t.variable(x);
    Var y = vx;
    for (int i = 0; i < reversals; ++i) y = ad::grad_reverse(y, lambda);
    const ad::Gradients g = t.backward(ad::sum(ad::mul(y, t.constant(w))));
    return g[vx];
  };
  const double single = max_abs_diff(grad_through(1, 1.0), -1.0 * w);
  const double twice = max_abs_diff(grad_through(2, 1.0), w);
  const double zero = max_abs_diff(grad_through(1, 0.0), Tensor(2, 3));
  const double err = std::max({single, twice, zero});
  out.push_back({"grad_reverse: sign contract", err == 0.0, err, 0.0});
}

void svd_checks(std::vector<CheckResult>& out, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  double worst_recon = 0.0, worst_orth = 0.0;
  bool bounds = true;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor m = random_tensor(dim(rng), dim(rng), rng, -3, 3);
    const SvdResult d = svd(m);
    Tensor us = d.U;
    for (std::size_t i = 0; i < us.rows(); ++i)
      for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= d.S(0, k);
    worst_recon = std::max(worst_recon, frobenius_norm(matmul_nt(us, d.V) - m) / std::max(1.0, frobenius_norm(m)));
    const std::size_t r = d.S.cols();
    worst_orth = std::max({worst_orth, max_abs_diff(matmul_tn(d.U, d.U), Tensor::identity(r)),
                           max_abs_diff(matmul_tn(d.V, d.V), Tensor::identity(r))});
    const double nuc = sum(d.S), fro = frobenius_norm(m);
    bounds = bounds && nuc >= fro - 1e-12 && nuc <= std::sqrt(static_cast<double>(r)) * fro + 1e-12;
  }
  out.push_back({"svd: reconstruction", worst_recon <= 1e-10, worst_recon, 1e-10});
  out.push_back({"svd: orthonormal factors", worst_orth <= 1e-10, worst_orth, 1e-10});
  out.push_back({"svd: frobenius <= nuclear <= sqrt(r) frobenius", bounds, bounds ? 0.0 : 1.0, 0.0});
}

void kl_checks(std::vector<CheckResult>& out, Rng& rng) {
  constexpr int kSamples = 100000;
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    const Tensor mu = random_tensor(1, 16, rng, -2.0, 2.0);
    const Tensor log_sigma = random_tensor(1, 16, rng, -1.0, 1.0);
    const double closed = kl_divergence(mu, log_sigma);
    // Antithetic pairs (ε, −ε): still kSamples draws from q.
    double acc = 0.0;
    for (int s = 0; s < kSamples / 2; ++s) {
      for (std::size_t f = 0; f < mu.cols(); ++f) {
        const double eps = normal(rng);
        for (double e : {eps, -eps}) {
          const double z = mu[f] + std::exp(log_sigma[f]) * e;
          acc += -log_sigma[f] - 0.5 * e * e + 0.5 * z * z;
        }
      }
    }
    worst = std::max(worst, std::abs(acc / kSamples - closed) / closed);
  }
  out.push_back({"kl: closed form vs monte carlo", worst < 0.01, worst, 0.01});
}

void augmentation_checks(std::vector<CheckResult>& out, Rng& rng) {
  Graph g;
  g.adjacency = adjacency_from_edges(
      10, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {9, 0}, {0, 5}, {2, 7}, {1, 6}});
  const AugmentConfig cfg{0.1, 0.1};
  const std::size_t n = g.num_nodes();
  const double edges = static_cast<double>(g.num_edges());
  const double non_edges = n * (n - 1) / 2.0 - edges;
  double dropped = 0.0, added = 0.0;
  constexpr int kTrials = 10000;
  bool valid = true;
  for (int t = 0; t < kTrials; ++t) {
    const Tensor a = augment_adjacency(g, cfg, rng);
    for (std::size_t i = 0; i < n; ++i) {
      valid = valid && a(i, i) == 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        valid = valid && a(i, j) == a(j, i) && (a(i, j) == 0.0 || a(i, j) == 1.0);
        if (g.adjacency(i, j) != 0.0 && a(i, j) == 0.0) dropped += 1.0;
        if (g.adjacency(i, j) == 0.0 && a(i, j) != 0.0) added += 1.0;
      }
    }
  }
  const double drop_err = std::abs(dropped / (edges * kTrials) - cfg.p_drop);
  const double add_err = std::abs(added / (non_edges * kTrials) - cfg.p_add * g.edge_density());
  out.push_back({"augmentation: drop frequency", drop_err <= 0.02, drop_err, 0.02});
  out.push_back({"augmentation: add frequency", add_err <= 0.02, add_err, 0.02});
  out.push_back({"augmentation: valid adjacency", valid, valid ? 0.0 : 1.0, 0.0});
}

void correlation_checks(std::vector<CheckResult>& out, Rng& rng) {
  double worst = 0.0;
  std::uniform_int_distribution<std::size_t> bdim(1, 8), kdim(2, 5);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    const std::size_t b = bdim(rng);
    const Tensor p = ad::softmax_rows(t.constant(random_tensor(b, kdim(rng), rng, -3, 3))).value();
    const CorrelationDiagnostics d = class_correlation_diagnostics(p);
    worst = std::max({worst, std::abs(d.intra + d.inter - static_cast<double>(b)),
                      std::abs(d.intra - d.frobenius * d.frobenius)});
  }
  const Tensor onehot = Tensor::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
  const CorrelationDiagnostics oh = class_correlation_diagnostics(onehot);
  const Tensor uniform(4, 2, 0.5);
  const CorrelationDiagnostics un = class_correlation_diagnostics(uniform);
  worst = std::max({worst, std::abs(oh.inter), std::abs(oh.nuclear - std::sqrt(8.0)),
                    std::abs(un.nuclear - std::sqrt(2.0))});
  out.push_back({"correlation: identities", worst <= 1e-9, worst, 1e-9});
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  primitive_checks(out, rng);
  loss_checks(out, rng);
  objective_checks(out, rng);
  grl_checks(out, rng);
  svd_checks(out, rng);
  kl_checks(out, rng);
  augmentation_checks(out, rng);
  correlation_checks(out, rng);
  return out;
}

}  // namespace grada
