#include "grada/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace grada {
namespace {

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out << (j ? " " : "") << hexfloat(t(i, j));
    out << '\n';
  }
}

std::size_t parse_dim(const std::map<std::string, std::size_t>& dims, const std::string& key) {
  auto it = dims.find(key);
  if (it == dims.end()) throw CheckpointError("checkpoint dims line is missing '" + key + "'");
  return it->second;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const ModelDims& d = ckpt.params.dims;
  out << kCheckpointHeader << '\n';
  out << "dims input_dim=" << d.input_dim << " encoder_hidden=" << d.encoder_hidden
      << " latent_dim=" << d.latent_dim << " decoder_hidden=" << d.decoder_hidden
      << " classifier_hidden=" << d.classifier_hidden << " num_classes=" << d.num_classes << '\n';
  for (const auto& [name, t] : ckpt.params.named()) write_tensor(out, name, *t);
  write_tensor(out, "scaler.mean", ckpt.scaler.mean);
  write_tensor(out, "scaler.stddev", ckpt.scaler.stddev);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader)
    throw CheckpointError("unsupported checkpoint header '" + line + "'");
  if (!std::getline(in, line) || line.rfind("dims ", 0) != 0) throw CheckpointError("missing dims line");

  std::map<std::string, std::size_t> dims;
  {
    std::istringstream ss(line.substr(5));
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw CheckpointError("malformed dims entry '" + tok + "'");
      dims[tok.substr(0, eq)] = std::stoul(tok.substr(eq + 1));
    }
  }

  std::map<std::string, Tensor> tensors;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string kw, name;
    std::size_t rows = 0, cols = 0;
    if (!(ss >> kw >> name >> rows >> cols) || kw != "tensor") throw CheckpointError("malformed line '" + line + "'");
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) throw CheckpointError("truncated tensor '" + name + "'");
      const char* p = line.c_str();
      for (std::size_t j = 0; j < cols; ++j) {
        char* end = nullptr;
        t(i, j) = std::strtod(p, &end);
        if (end == p) throw CheckpointError("bad value in tensor '" + name + "' row " + std::to_string(i));
        p = end;
      }
    }
    tensors.emplace(name, std::move(t));
  }

  Checkpoint ckpt;
  ModelDims& d = ckpt.params.dims;
  d.input_dim = parse_dim(dims, "input_dim");
  d.encoder_hidden = parse_dim(dims, "encoder_hidden");
  d.latent_dim = parse_dim(dims, "latent_dim");
  d.decoder_hidden = parse_dim(dims, "decoder_hidden");
  d.classifier_hidden = parse_dim(dims, "classifier_hidden");
  d.num_classes = parse_dim(dims, "num_classes");

  // Expected shapes come from a freshly initialised model of the same dims.
  Rng rng(0);
  const ModelParams shape_ref = init_params(d, rng);
  auto take = [&](const std::string& name, const Tensor& like) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols())
      throw CheckpointError("tensor '" + name + "' has shape " + it->second.shape_string() + ", dims imply " +
                            like.shape_string());
    return it->second;
  };
  auto dst = ckpt.params.named();
  const auto ref = shape_ref.named();
  for (std::size_t k = 0; k < dst.size(); ++k) *dst[k].second = take(dst[k].first, *ref[k].second);
  ckpt.scaler.mean = take("scaler.mean", Tensor(1, d.input_dim));
  ckpt.scaler.stddev = take("scaler.stddev", Tensor(1, d.input_dim));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ckpt);
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace grada
