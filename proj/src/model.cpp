#include "grada/model.hpp"

#include <algorithm>
#include <cmath>

namespace grada {

using ad::Var;

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(fan_in, fan_out);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

GatLayerParams init_gat(std::size_t in, std::size_t out, Rng& rng) {
  GatLayerParams p;
  p.weight = glorot(in, out, rng);
  p.attention = glorot(2 * out, 1, rng);
  return p;
}

Var bind_one(ad::Tape& tape, const Tensor& t, bool trainable) {
  return trainable ? tape.variable(t) : tape.constant(t);
}

Var dropout(const Var& x, const ForwardOptions& opts) {
  if (!opts.dropout || opts.dropout_rate <= 0.0) return x;
  const double keep = 1.0 - opts.dropout_rate;
  std::bernoulli_distribution coin(keep);
  Tensor mask(x.rows(), x.cols());
  for (double& v : mask.data()) v = coin(*opts.dropout) ? 1.0 / keep : 0.0;
  return ad::mul(x, x.tape().constant(std::move(mask)));
}

Tensor attention_mask(const Tensor& adjacency) {
  Tensor m = adjacency;
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) = 1.0;
  return m;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  return {
      {"encoder.shared.weight", &encoder.shared.weight},
      {"encoder.shared.attention", &encoder.shared.attention},
      {"encoder.mu.weight", &encoder.mu.weight},
      {"encoder.mu.attention", &encoder.mu.attention},
      {"encoder.log_sigma.weight", &encoder.log_sigma.weight},
      {"encoder.log_sigma.attention", &encoder.log_sigma.attention},
      {"decoder.w0", &decoder.w0},
      {"decoder.w1", &decoder.w1},
      {"classifier.w1", &classifier.w1},
      {"classifier.b1", &classifier.b1},
      {"classifier.w2", &classifier.w2},
      {"classifier.b2", &classifier.b2},
  };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  auto mut = const_cast<ModelParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

ModelParams init_params(const ModelDims& dims, Rng& rng) {
  ModelParams p;
  p.dims = dims;
  p.encoder.shared = init_gat(dims.input_dim, dims.encoder_hidden, rng);
  p.encoder.mu = init_gat(dims.encoder_hidden, dims.latent_dim, rng);
  p.encoder.log_sigma = init_gat(dims.encoder_hidden, dims.latent_dim, rng);
  // σ = 1 everywhere at the start
  p.encoder.log_sigma.weight = Tensor(dims.encoder_hidden, dims.latent_dim);
  p.decoder.w0 = glorot(dims.latent_dim, dims.decoder_hidden, rng);
  p.decoder.w1 = glorot(dims.decoder_hidden, dims.decoder_hidden, rng);
  p.classifier.w1 = glorot(dims.latent_dim, dims.classifier_hidden, rng);
  p.classifier.b1 = Tensor(1, dims.classifier_hidden);
  p.classifier.w2 = glorot(dims.classifier_hidden, dims.num_classes, rng);
  p.classifier.b2 = Tensor(1, dims.num_classes);
  return p;
}

GatLayerVars bind(ad::Tape& tape, const GatLayerParams& p, bool trainable) {
  return GatLayerVars{bind_one(tape, p.weight, trainable), bind_one(tape, p.attention, trainable), p.slope};
}

ModelVars bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  ModelVars v;
  v.encoder.shared = bind(tape, params.encoder.shared, trainable);
  v.encoder.mu = bind(tape, params.encoder.mu, trainable);
  v.encoder.log_sigma = bind(tape, params.encoder.log_sigma, trainable);
  v.decoder.w0 = bind_one(tape, params.decoder.w0, trainable);
  v.decoder.w1 = bind_one(tape, params.decoder.w1, trainable);
  v.classifier.w1 = bind_one(tape, params.classifier.w1, trainable);
  v.classifier.b1 = bind_one(tape, params.classifier.b1, trainable);
  v.classifier.w2 = bind_one(tape, params.classifier.w2, trainable);
  v.classifier.b2 = bind_one(tape, params.classifier.b2, trainable);
  v.all = {v.encoder.shared.weight, v.encoder.shared.attention, v.encoder.mu.weight,
           v.encoder.mu.attention,  v.encoder.log_sigma.weight, v.encoder.log_sigma.attention,
           v.decoder.w0,            v.decoder.w1,               v.classifier.w1,
           v.classifier.b1,         v.classifier.w2,            v.classifier.b2};
  return v;
}

Var gat_forward(const GatLayerVars& p, const GraphBatch& batch, const std::vector<Tensor>& adjacency,
                const Var& h_in) {
  if (h_in.cols() != p.weight.rows())
    throw ShapeError("gat_forward: input " + h_in.value().shape_string() + " does not match weight " +
                     p.weight.value().shape_string());
  if (h_in.rows() != batch.num_nodes())
    throw ShapeError("gat_forward: input has " + std::to_string(h_in.rows()) + " rows for " +
                     std::to_string(batch.num_nodes()) + " nodes");
  if (adjacency.size() != batch.num_graphs()) throw ShapeError("gat_forward: adjacency block count mismatch");
  const std::size_t k_out = p.weight.cols();
  if (p.attention.rows() != 2 * k_out || p.attention.cols() != 1)
    throw ShapeError("gat_forward: attention vector " + p.attention.value().shape_string() + " for width " +
                     std::to_string(k_out));

  ad::Tape& tape = h_in.tape();
  const Var wh = ad::matmul(h_in, p.weight);
  const Var score_self = ad::matmul(wh, ad::slice_rows(p.attention, 0, k_out));
  const Var score_nbr = ad::matmul(wh, ad::slice_rows(p.attention, k_out, k_out));

  std::vector<Var> outputs;
  outputs.reserve(batch.num_graphs());
  for (std::size_t g = 0; g < batch.num_graphs(); ++g) {
    const auto [off, n] = batch.ranges()[g];
    if (adjacency[g].rows() != n || adjacency[g].cols() != n)
      throw ShapeError("gat_forward: adjacency block " + adjacency[g].shape_string() + " for graph of " +
                       std::to_string(n) + " nodes");
    const Var ones_row = tape.constant(Tensor(1, n, 1.0));
    const Var ones_col = tape.constant(Tensor(n, 1, 1.0));
    // e_ij = a_selfᵀ W h_i + a_nbrᵀ W h_j
    const Var e = ad::matmul(ad::slice_rows(score_self, off, n), ones_row) +
                  ad::matmul(ones_col, ad::transpose(ad::slice_rows(score_nbr, off, n)));
    const Var alpha = ad::masked_softmax_rows(ad::leaky_relu(e, p.slope), attention_mask(adjacency[g]));
    outputs.push_back(ad::matmul(alpha, ad::slice_rows(wh, off, n)));
  }
  return ad::concat_rows(outputs);
}

Tensor gat_attention(const GatLayerParams& p, const Tensor& adjacency, const Tensor& h_in) {
  ad::Tape tape;
  const Var h = tape.constant(h_in);
  const GatLayerVars v = bind(tape, p, false);
  const std::size_t k_out = p.weight.cols();
  const Var wh = ad::matmul(h, v.weight);
  const Var s1 = ad::matmul(wh, ad::slice_rows(v.attention, 0, k_out));
  const Var s2 = ad::matmul(wh, ad::slice_rows(v.attention, k_out, k_out));
  const std::size_t n = h_in.rows();
  const Var e = ad::matmul(s1, tape.constant(Tensor(1, n, 1.0))) +
                ad::matmul(tape.constant(Tensor(n, 1, 1.0)), ad::transpose(s2));
  return ad::masked_softmax_rows(ad::leaky_relu(e, p.slope), attention_mask(adjacency)).value();
}

LatentBatch encode(const EncoderVars& enc, const GraphBatch& batch, const std::vector<Tensor>& adjacency,
                   const ForwardOptions& opts) {
  ad::Tape& tape = enc.shared.weight.tape();
  const Var x = dropout(tape.constant(batch.features()), opts);
  const Var hidden = dropout(ad::elu(gat_forward(enc.shared, batch, adjacency, x)), opts);

  LatentBatch out;
  out.mu = gat_forward(enc.mu, batch, adjacency, hidden);
  out.log_sigma = ad::clamp(gat_forward(enc.log_sigma, batch, adjacency, hidden), kLogSigmaMin, kLogSigmaMax);
  out.eps = Tensor(out.mu.rows(), out.mu.cols());
  if (opts.noise) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : out.eps.data()) v = normal(*opts.noise);
  }
  out.z = out.mu + ad::mul(tape.constant(out.eps), ad::exp(out.log_sigma));
  return out;
}

Var decoder_embedding(const DecoderVars& dec, const Var& z) {
  return ad::relu(ad::matmul(ad::matmul(z, dec.w0), dec.w1));
}

std::vector<Var> decode_logits(const DecoderVars& dec, const GraphBatch& batch, const Var& z) {
  const Var h = decoder_embedding(dec, z);
  std::vector<Var> out;
  out.reserve(batch.num_graphs());
  for (const auto& [off, n] : batch.ranges()) {
    const Var hk = ad::slice_rows(h, off, n);
    out.push_back(ad::matmul(hk, ad::transpose(hk)));
  }
  return out;
}

Var decode(const DecoderVars& dec, const Var& z) {
  const Var h = decoder_embedding(dec, z);
  return ad::sigmoid(ad::matmul(h, ad::transpose(h)));
}

Var pool(const GraphBatch& batch, const Var& z) {
  if (z.rows() != batch.num_nodes())
    throw ShapeError("pool: latent has " + std::to_string(z.rows()) + " rows for " +
                     std::to_string(batch.num_nodes()) + " nodes");
  std::vector<Var> rows;
  rows.reserve(batch.num_graphs());
  for (const auto& [off, n] : batch.ranges()) rows.push_back(ad::mean_rows(ad::slice_rows(z, off, n)));
  return ad::concat_rows(rows);
}

ClassifierOutput classify(const ClassifierVars& cls, const Var& graph_embedding) {
  const Var hidden = ad::relu(ad::add_row(ad::matmul(graph_embedding, cls.w1), cls.b1));
  const Var logits = ad::add_row(ad::matmul(hidden, cls.w2), cls.b2);
  return {logits, ad::softmax_rows(logits)};
}

Tensor embed_graphs(const ModelParams& params, const GraphBatch& batch) {
  ad::Tape tape;
  const ModelVars v = bind(tape, params, false);
  const LatentBatch latent = encode(v.encoder, batch, batch.blocks(), ForwardOptions{});
  return pool(batch, latent.z).value();
}

Tensor predict_proba(const ModelParams& params, const GraphBatch& batch) {
  ad::Tape tape;
  const ModelVars v = bind(tape, params, false);
  const LatentBatch latent = encode(v.encoder, batch, batch.blocks(), ForwardOptions{});
  return classify(v.classifier, pool(batch, latent.z)).probs.value();
}

std::vector<int> predict(const ModelParams& params, const GraphBatch& batch) {
  const Tensor p = predict_proba(params, batch);
  std::vector<int> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace grada
