#include "grada/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "grada/dataset.hpp"

namespace grada {

using ad::Var;

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull: return "full";
    case AblationMode::kDnanD: return "dnan_d";
    case AblationMode::kDnanN: return "dnan_n";
    case AblationMode::kSourceOnly: return "source_only";
  }
  return "full";
}

AblationMode parse_ablation(const std::string& name) {
  if (name == "full") return AblationMode::kFull;
  if (name == "dnan_d") return AblationMode::kDnanD;
  if (name == "dnan_n") return AblationMode::kDnanN;
  if (name == "source_only") return AblationMode::kSourceOnly;
  throw std::invalid_argument("unknown ablation mode '" + name + "' (expected full, dnan_d, dnan_n, source_only)");
}

void TrainConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!unit(dropout) || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (encoder_hidden == 0) throw std::invalid_argument("encoder_hidden must be positive");
  if (decoder_hidden == 0) throw std::invalid_argument("decoder_hidden must be positive");
  if (latent_dim == 0) throw std::invalid_argument("latent_dim must be positive");
  if (!(lr_decay >= 0.0)) throw std::invalid_argument("lr_decay must be non-negative");
  if (!(lambda_e >= 0.0)) throw std::invalid_argument("lambda_e must be non-negative");
  if (!(lambda_cls >= 0.0)) throw std::invalid_argument("lambda_cls must be non-negative");
  if (!(lambda_elbo >= 0.0)) throw std::invalid_argument("lambda_elbo must be non-negative");
  if (!(lambda_nwd >= 0.0)) throw std::invalid_argument("lambda_nwd must be non-negative");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (!unit(p_add)) throw std::invalid_argument("p_add must lie in [0, 1]");
  if (!unit(p_drop)) throw std::invalid_argument("p_drop must lie in [0, 1]");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must lie in (0, 1)");
}

void adam_update(OptimizerState& opt, const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr,
                 double weight_decay) {
  if (params.size() != grads.size())
    throw ShapeError("adam_update: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  if (opt.first_moment.empty()) {
    for (const Tensor* p : params) {
      opt.first_moment.emplace_back(p->rows(), p->cols());
      opt.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (opt.first_moment.size() != params.size()) throw ShapeError("adam_update: optimizer state size mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_update");
    require_same_shape(*params[k], opt.first_moment[k], "adam_update(state)");
  }

  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = opt.first_moment[k];
    Tensor& v = opt.second_moment[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + weight_decay * p[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const double p = total_steps == 0 ? 0.0 : std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return cfg.learning_rate / std::pow(1.0 + 10.0 * p, cfg.lr_decay);
}

double grl_lambda_at(std::size_t step, std::size_t total_steps) {
  const double p = total_steps == 0 ? 0.0 : std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

namespace {

bool uses_elbo(AblationMode m) { return m == AblationMode::kFull || m == AblationMode::kDnanN; }
bool uses_nwd(AblationMode m) { return m == AblationMode::kFull || m == AblationMode::kDnanD; }
bool uses_augmentation(AblationMode m) { return uses_elbo(m); }

std::vector<int> batch_labels(const GraphBatch& b) {
  std::vector<int> out;
  out.reserve(b.num_graphs());
  for (std::size_t i = 0; i < b.num_graphs(); ++i) {
    if (!b.labels()[i]) throw std::invalid_argument("source batch graph '" + b.ids()[i] + "' has no label");
    out.push_back(*b.labels()[i]);
  }
  return out;
}

LossReport& accumulate(LossReport& acc, const LossReport& r) {
  acc.recon += r.recon;
  acc.kl += r.kl;
  acc.elbo += r.elbo;
  acc.entropy_reg += r.entropy_reg;
  acc.cls += r.cls;
  acc.nwd += r.nwd;
  acc.total += r.total;
  return acc;
}

LossReport divided(LossReport r, double n) {
  r.recon /= n;
  r.kl /= n;
  r.elbo /= n;
  r.entropy_reg /= n;
  r.cls /= n;
  r.nwd /= n;
  r.total /= n;
  return r;
}

// Cycles through a shuffled index set; reshuffles when exhausted.
class IndexStream {
 public:
  explicit IndexStream(std::size_t n) : order_(n) { std::iota(order_.begin(), order_.end(), 0); }
  std::vector<std::size_t> next(std::size_t count, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng);
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

GraphBatch gather(const std::vector<Graph>& graphs, const std::vector<std::size_t>& idx) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(idx.size());
  for (std::size_t i : idx) ptrs.push_back(&graphs[i]);
  return batch_graphs(ptrs);
}

}  // namespace

LossReport evaluate_pass(const ModelParams& params, const GraphBatch& source, const UnlabeledBatch& target,
                         const std::vector<Tensor>* source_adjacency, const std::vector<Tensor>* target_adjacency,
                         bool include_cls, const TrainConfig& cfg, double grl_lambda, Rng& rng,
                         std::vector<Tensor>* grads_out) {
  const AblationMode mode = cfg.ablation_mode;
  const GraphBatch& tgt = target.graphs();
  if (source.num_graphs() == 0 || tgt.num_graphs() == 0) throw std::invalid_argument("train step: empty batch");

  const bool want_cls = include_cls && cfg.lambda_cls > 0.0;
  const bool want_elbo = uses_elbo(mode) && cfg.lambda_elbo > 0.0;
  const bool want_entropy = uses_elbo(mode) && cfg.lambda_e > 0.0;
  const bool want_nwd = uses_nwd(mode) && cfg.lambda_nwd > 0.0;
  const bool need_target = want_elbo || want_entropy || want_nwd;

  ad::Tape tape;
  const ModelVars vars = bind(tape, params, true);
  const ForwardOptions opts{&rng, &rng, cfg.dropout};

  const LatentBatch ls = encode(vars.encoder, source, source_adjacency ? *source_adjacency : source.blocks(), opts);
  std::optional<LatentBatch> lt;
  if (need_target) lt = encode(vars.encoder, tgt, target_adjacency ? *target_adjacency : tgt.blocks(), opts);

  const Var emb_s = pool(source, ls.z);
  ObjectiveTerms terms;
  LossReport report;

  if (want_cls) {
    const std::vector<int> labels = batch_labels(source);
    const Var cls = cls_loss(classify(vars.classifier, emb_s).logits, labels);
    terms.cls = ad::scale(cls, cfg.lambda_cls);
    report.cls = cls.value().item();
  }

  if (want_elbo) {
    // Reconstruction targets are the clean blocks held by the batches.
    const ElboTerms es = elbo_batch(decode_logits(vars.decoder, source, ls.z), source, ls.mu, ls.log_sigma);
    const ElboTerms et = elbo_batch(decode_logits(vars.decoder, tgt, lt->z), tgt, lt->mu, lt->log_sigma);
    const double ns = static_cast<double>(source.num_graphs()), nt = static_cast<double>(tgt.num_graphs());
    const double ws = ns / (ns + nt), wt = nt / (ns + nt);
    const Var recon = ad::scale(es.recon, ws) + ad::scale(et.recon, wt);
    const Var kl = ad::scale(es.kl, ws) + ad::scale(et.kl, wt);
    const Var elbo = recon - kl;
    terms.elbo = ad::scale(elbo, cfg.lambda_elbo);
    report.recon = recon.value().item();
    report.kl = kl.value().item();
    report.elbo = elbo.value().item();
  }

  if (want_entropy) {
    const std::array<std::pair<Var, const GraphBatch*>, 2> latents{{{ls.z, &source}, {lt->z, &tgt}}};
    terms.entropy = entropy_reg(latents);
    report.entropy_reg = terms.entropy.value().item();
  }

  if (want_nwd) {
    const Var ps = classify(vars.classifier, ad::grad_reverse(emb_s, grl_lambda)).probs;
    const Var pt = classify(vars.classifier, ad::grad_reverse(pool(tgt, lt->z), grl_lambda)).probs;
    const Var nwd = nwd_loss(ps, pt);
    terms.nwd_critic = ad::scale(nwd, cfg.lambda_nwd);
    report.nwd = nwd.value().item();
  }

  const Var total = total_objective(tape, terms, cfg.lambda_e);
  report.total = total.value().item();

  if (grads_out) {
    const ad::Gradients grads = tape.backward(total);
    const auto named = params.named();
    grads_out->clear();
    for (std::size_t k = 0; k < vars.all.size(); ++k) {
      const Tensor& g = grads[vars.all[k]];
      if (!g.all_finite()) throw std::runtime_error("non-finite gradient for parameter " + named[k].first);
      grads_out->push_back(g);
    }
  }
  return report;
}

StepReport train_step(ModelParams& params, OptimizerState& opt, const GraphBatch& source,
                      const UnlabeledBatch& target, const TrainConfig& cfg, const Schedule& schedule, Rng& rng) {
  const double lr = lr_at(schedule.step, schedule.total_steps, cfg);
  const double grl = grl_lambda_at(schedule.step, schedule.total_steps);

  std::vector<Tensor*> ptrs;
  for (auto& [name, t] : params.named()) ptrs.push_back(t);

  StepReport out;
  std::vector<Tensor> grads;
  out.clean = evaluate_pass(params, source, target, nullptr, nullptr, true, cfg, grl, rng, &grads);
  adam_update(opt, ptrs, grads, lr, cfg.weight_decay);
  ++out.optimizer_steps;

  if (uses_augmentation(cfg.ablation_mode)) {
    const AugmentConfig aug{cfg.p_add, cfg.p_drop};
    const std::vector<Tensor> src_aug = augment_batch(source, aug, rng);
    const std::vector<Tensor> tgt_aug = augment_batch(target.graphs(), aug, rng);
    out.augmented = evaluate_pass(params, source, target, &src_aug, &tgt_aug, false, cfg, grl, rng, &grads);
    adam_update(opt, ptrs, grads, lr, cfg.weight_decay);
    ++out.optimizer_steps;
  }
  for (const Tensor* p : ptrs)
    if (!p->all_finite()) throw std::runtime_error("parameters became non-finite during training");
  return out;
}

FeatureScaler FeatureScaler::fit(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("FeatureScaler::fit: no graphs");
  const std::size_t k = graphs.front().features.cols();
  FeatureScaler s{Tensor(1, k), Tensor(1, k)};
  double count = 0.0;
  for (const Graph& g : graphs) {
    if (g.features.cols() != k) throw ShapeError("FeatureScaler::fit: mixed feature dimensions");
    for (std::size_t i = 0; i < g.features.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) s.mean(0, j) += g.features(i, j);
    count += static_cast<double>(g.features.rows());
  }
  s.mean *= 1.0 / count;
  for (const Graph& g : graphs)
    for (std::size_t i = 0; i < g.features.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double d = g.features(i, j) - s.mean(0, j);
        s.stddev(0, j) += d * d;
      }
  for (std::size_t j = 0; j < k; ++j) s.stddev(0, j) = std::max(1e-8, std::sqrt(s.stddev(0, j) / count));
  return s;
}

FeatureScaler FeatureScaler::identity(std::size_t k) { return FeatureScaler{Tensor(1, k), Tensor(1, k, 1.0)}; }

Graph FeatureScaler::apply(const Graph& g) const {
  if (g.features.cols() != mean.cols())
    throw ShapeError("FeatureScaler::apply: graph '" + g.id + "' has " + std::to_string(g.features.cols()) +
                     " feature columns, scaler expects " + std::to_string(mean.cols()));
  Graph out = g;
  for (std::size_t i = 0; i < out.features.rows(); ++i)
    for (std::size_t j = 0; j < out.features.cols(); ++j)
      out.features(i, j) = (out.features(i, j) - mean(0, j)) / stddev(0, j);
  return out;
}

std::vector<Graph> FeatureScaler::apply(const std::vector<Graph>& gs) const {
  std::vector<Graph> out;
  out.reserve(gs.size());
  for (const Graph& g : gs) out.push_back(apply(g));
  return out;
}

ModelDims dims_for(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  ModelDims d;
  d.input_dim = input_dim;
  d.encoder_hidden = cfg.encoder_hidden;
  d.latent_dim = cfg.latent_dim;
  d.decoder_hidden = cfg.decoder_hidden;
  d.classifier_hidden = cfg.classifier_hidden == 0 ? cfg.encoder_hidden : cfg.classifier_hidden;
  d.num_classes = num_classes;
  return d;
}

double evaluate_f1(const ModelParams& params, const std::vector<Graph>& graphs, std::size_t batch_size) {
  if (graphs.empty()) throw std::invalid_argument("evaluate_f1: no graphs");
  std::vector<int> preds;
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    std::vector<const Graph*> chunk;
    for (std::size_t i = start; i < std::min(graphs.size(), start + batch_size); ++i) chunk.push_back(&graphs[i]);
    const std::vector<int> p = predict(params, batch_graphs(chunk));
    preds.insert(preds.end(), p.begin(), p.end());
  }
  return f1_score(preds, labels_of(graphs), 1);
}

ExperimentResult run_experiment(const TrainConfig& cfg, const std::vector<Graph>& source,
                                const std::vector<Graph>& target, const EpochCallback& on_epoch) {
  cfg.validate();
  if (source.empty() || target.empty()) throw std::invalid_argument("run_experiment: empty dataset");
  auto [s_train_raw, s_test_raw] = split(source, cfg.train_fraction, cfg.seed);
  auto [t_train_raw, t_test_raw] = split(target, cfg.train_fraction, cfg.seed + 0x9e3779b97f4a7c15ULL);

  ExperimentResult result;
  const std::size_t k = s_train_raw.front().features.cols();
  result.scaler = cfg.standardize ? FeatureScaler::fit(s_train_raw) : FeatureScaler::identity(k);
  const std::vector<Graph> s_train = result.scaler.apply(s_train_raw);
  const std::vector<Graph> s_test = result.scaler.apply(s_test_raw);
  std::vector<Graph> t_train = result.scaler.apply(t_train_raw);
  const std::vector<Graph> t_test = result.scaler.apply(t_test_raw);
  // The training loop never sees target labels.
  for (Graph& g : t_train) g.label.reset();

  int max_label = 1;
  for (const Graph& g : s_train) max_label = std::max(max_label, *g.label);
  Rng rng(cfg.seed);
  result.params = init_params(dims_for(cfg, k, static_cast<std::size_t>(max_label) + 1), rng);

  const std::size_t bs_source = std::min(cfg.batch_size, s_train.size());
  const std::size_t bs_target = std::min(cfg.batch_size, t_train.size());
  const std::size_t batches = std::max((s_train.size() + bs_source - 1) / bs_source,
                                       (t_train.size() + bs_target - 1) / bs_target);
  const std::size_t total_steps = cfg.epochs * batches;
  const std::size_t eval_bs = std::max<std::size_t>(cfg.batch_size, 64);

  OptimizerState opt;
  IndexStream s_stream(s_train.size()), t_stream(t_train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.batches = batches;
    m.lr = lr_at(step, total_steps, cfg);
    LossReport clean_sum, aug_sum;
    std::size_t aug_count = 0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const GraphBatch sb = gather(s_train, s_stream.next(bs_source, rng));
      const UnlabeledBatch tb(gather(t_train, t_stream.next(bs_target, rng)));
      const StepReport r = train_step(result.params, opt, sb, tb, cfg, Schedule{step, total_steps}, rng);
      accumulate(clean_sum, r.clean);
      if (r.augmented) {
        accumulate(aug_sum, *r.augmented);
        ++aug_count;
      }
      m.optimizer_steps += r.optimizer_steps;
    }
    m.clean = divided(clean_sum, static_cast<double>(batches));
    if (aug_count > 0) m.augmented = divided(aug_sum, static_cast<double>(aug_count));
    m.f1_source = evaluate_f1(result.params, s_test, eval_bs);
    m.f1_target = evaluate_f1(result.params, t_test, eval_bs);
    result.optimizer_steps += m.optimizer_steps;
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.f1_source = result.epochs.back().f1_source;
  result.f1_target = result.epochs.back().f1_target;
  return result;
}

}  // namespace grada
