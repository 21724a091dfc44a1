#pragma once

#include <string>
#include <vector>

#include "grada/autodiff.hpp"
#include "grada/graph.hpp"
#include "grada/tensor.hpp"

namespace grada {

/// Layer widths of the full network.
struct ModelDims {
  std::size_t input_dim = 7;
  std::size_t encoder_hidden = 256;
  std::size_t latent_dim = 16;
  std::size_t decoder_hidden = 64;
  std::size_t classifier_hidden = 256;
  std::size_t num_classes = 2;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct GatLayerParams {
  Tensor weight;     ///< K_in x K_out
  Tensor attention;  ///< 2*K_out x 1; first half scores the receiving node, second half the neighbour
  double slope = 0.2;
};

struct EncoderParams {
  GatLayerParams shared;
  GatLayerParams mu;
  GatLayerParams log_sigma;
};

/// H = ReLU((Z·W0)·W1)
struct DecoderParams {
  Tensor w0;  ///< F x H_dec
  Tensor w1;  ///< H_dec x H_dec
};

struct ClassifierParams {
  Tensor w1;  ///< F x H_cls
  Tensor b1;  ///< 1 x H_cls
  Tensor w2;  ///< H_cls x k
  Tensor b2;  ///< 1 x k
};

/// Every trainable tensor of the encoder, decoder and classifier.
struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  DecoderParams decoder;
  ClassifierParams classifier;

  /// Stable name -> tensor listing used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

/// Glorot-uniform weights, zero biases. The log σ head starts at zero.
ModelParams init_params(const ModelDims& dims, Rng& rng);

// ---- parameters bound onto a tape ---------------------------------------

struct GatLayerVars {
  ad::Var weight;
  ad::Var attention;
  double slope = 0.2;
};
struct EncoderVars {
  GatLayerVars shared, mu, log_sigma;
};
struct DecoderVars {
  ad::Var w0, w1;
};
struct ClassifierVars {
  ad::Var w1, b1, w2, b2;
};
struct ModelVars {
  EncoderVars encoder;
  DecoderVars decoder;
  ClassifierVars classifier;
  /// Same order as ModelParams::named().
  std::vector<ad::Var> all;
};

/// Records every parameter on the tape, as variables when `trainable`.
ModelVars bind(ad::Tape& tape, const ModelParams& params, bool trainable = true);
GatLayerVars bind(ad::Tape& tape, const GatLayerParams& p, bool trainable = true);

// ---- forward -------------------------------------------------------------

/// Single-head graph attention over each graph's neighbourhood plus self-loop.
/// `adjacency` holds one block per graph of `batch`.
ad::Var gat_forward(const GatLayerVars& p, const GraphBatch& batch, const std::vector<Tensor>& adjacency,
                    const ad::Var& h_in);
/// Attention coefficients of one graph block (rows sum to one over N(i) ∪ {i}).
Tensor gat_attention(const GatLayerParams& p, const Tensor& adjacency, const Tensor& h_in);

struct ForwardOptions {
  Rng* noise = nullptr;    ///< ε source; nullptr means ε = 0
  Rng* dropout = nullptr;  ///< dropout mask source; nullptr disables dropout
  double dropout_rate = 0.0;
};

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

struct LatentBatch {
  ad::Var mu;
  ad::Var log_sigma;  ///< clamped to [kLogSigmaMin, kLogSigmaMax]
  ad::Var z;          ///< mu + eps ⊙ exp(log_sigma)
  Tensor eps;
};

LatentBatch encode(const EncoderVars& enc, const GraphBatch& batch, const std::vector<Tensor>& adjacency,
                   const ForwardOptions& opts);

/// Latent rows after the decoder MLP: ReLU((Z·W0)·W1).
ad::Var decoder_embedding(const DecoderVars& dec, const ad::Var& z);
/// Per-graph edge logits h_iᵀh_j for every block of the batch.
std::vector<ad::Var> decode_logits(const DecoderVars& dec, const GraphBatch& batch, const ad::Var& z);
/// n x n edge probabilities sigmoid(h_iᵀh_j) over all rows of z.
ad::Var decode(const DecoderVars& dec, const ad::Var& z);

/// Mean of each graph's node rows: num_graphs x F.
ad::Var pool(const GraphBatch& batch, const ad::Var& z);

struct ClassifierOutput {
  ad::Var logits;
  ad::Var probs;  ///< row softmax of logits
};
ClassifierOutput classify(const ClassifierVars& cls, const ad::Var& graph_embedding);

// ---- evaluation helpers (no gradients, ε = 0, no dropout) ------------------

/// Pooled per-graph embeddings, num_graphs x F.
Tensor embed_graphs(const ModelParams& params, const GraphBatch& batch);
/// Softmax prediction matrix, num_graphs x k.
Tensor predict_proba(const ModelParams& params, const GraphBatch& batch);
std::vector<int> predict(const ModelParams& params, const GraphBatch& batch);

}  // namespace grada
