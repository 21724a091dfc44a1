#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grada/graph.hpp"
#include "grada/losses.hpp"
#include "grada/model.hpp"

namespace grada {

enum class AblationMode { kFull, kDnanD, kDnanN, kSourceOnly };

std::string to_string(AblationMode mode);
/// Accepts full, dnan_d, dnan_n, source_only.
AblationMode parse_ablation(const std::string& name);

/// Hyper-parameters.
struct TrainConfig {
  std::size_t batch_size = 1024;
  double learning_rate = 0.01;
  double dropout = 0.5;
  std::size_t encoder_hidden = 256;
  std::size_t decoder_hidden = 64;
  std::size_t latent_dim = 16;
  /// 0 means "same as encoder_hidden".
  std::size_t classifier_hidden = 0;
  double lr_decay = 0.75;
  double lambda_e = 1.0;
  /// Weights on the classification, ELBO and NWD terms.
  double lambda_cls = 1.0;
  double lambda_elbo = 1.0;
  double lambda_nwd = 1.0;
  double weight_decay = 0.0005;
  double p_add = 0.1;
  double p_drop = 0.1;
  std::size_t epochs = 50;
  std::uint64_t seed = 27;
  AblationMode ablation_mode = AblationMode::kFull;
  double train_fraction = 0.8;
  /// Standardise node features with statistics of the source training split.
  bool standardize = true;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Adam with bias-corrected moments; weight decay is added to the gradient
/// (coupled L2). Lazily sizes the moment buffers on first use.
void adam_update(OptimizerState& opt, const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                 double lr, double weight_decay);

/// lr₀ / (1 + 10 p)^decay with p = step / total_steps.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);
/// Gradient-reversal warm-up 2 / (1 + exp(-10 p)) - 1.
double grl_lambda_at(std::size_t step, std::size_t total_steps);

struct StepReport {
  LossReport clean;
  std::optional<LossReport> augmented;
  std::size_t optimizer_steps = 0;
};

/// Progress of the run, for the learning-rate and reversal schedules.
struct Schedule {
  std::size_t step = 0;
  std::size_t total_steps = 1;
};

/// One iteration of the two-pass procedure: update on clean adjacencies
/// (all enabled terms), then augment both domains and update again with the
/// classification term switched off. The augmented pass still reconstructs
/// the clean adjacency. Modes dnan_d and source_only run only the clean pass.
StepReport train_step(ModelParams& params, OptimizerState& opt, const GraphBatch& source,
                      const UnlabeledBatch& target, const TrainConfig& cfg, const Schedule& schedule, Rng& rng);

/// Evaluates the objective of one pass without updating anything. Exposed
/// for gradient checks and diagnostics. Returns the report and, when
/// `grads_out` is non-null, the parameter gradients in ModelParams::named() order.
LossReport evaluate_pass(const ModelParams& params, const GraphBatch& source, const UnlabeledBatch& target,
                         const std::vector<Tensor>* source_adjacency, const std::vector<Tensor>* target_adjacency,
                         bool include_cls, const TrainConfig& cfg, double grl_lambda, Rng& rng,
                         std::vector<Tensor>* grads_out);

struct EpochMetrics {
  std::size_t epoch = 0;
  double f1_target = 0.0;
  double f1_source = 0.0;
  double lr = 0.0;
  std::size_t optimizer_steps = 0;
  std::size_t batches = 0;
  LossReport clean;                       ///< mean over the epoch's clean passes
  std::optional<LossReport> augmented;    ///< mean over augmented passes, when run
};

/// Mean/std per feature column, fitted on source training graphs.
struct FeatureScaler {
  Tensor mean;  ///< 1 x K
  Tensor stddev;  ///< 1 x K, floored at 1e-8
  static FeatureScaler fit(const std::vector<Graph>& graphs);
  static FeatureScaler identity(std::size_t k);
  Graph apply(const Graph& g) const;
  std::vector<Graph> apply(const std::vector<Graph>& gs) const;
};

struct ExperimentResult {
  ModelParams params;
  FeatureScaler scaler;
  std::vector<EpochMetrics> epochs;
  double f1_target = 0.0;
  double f1_source = 0.0;
  std::size_t optimizer_steps = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Splits both domains (stratified, cfg.seed), trains for cfg.epochs and
/// evaluates F1 on the test splits after every epoch. Target labels are used
/// only for evaluation.
ExperimentResult run_experiment(const TrainConfig& cfg, const std::vector<Graph>& source,
                                const std::vector<Graph>& target, const EpochCallback& on_epoch = {});

/// Target-test F1 of the positive class (1) for trained parameters.
double evaluate_f1(const ModelParams& params, const std::vector<Graph>& graphs, std::size_t batch_size);

ModelDims dims_for(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_classes);

}  // namespace grada
