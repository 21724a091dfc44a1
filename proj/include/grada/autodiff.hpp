#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "grada/tensor.hpp"

namespace grada::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of the backward root with respect to every node that required
/// grad. Nodes that do not require grad are absent.
class Gradients {
 public:
  bool contains(const Var& v) const { return grads_.count(v.id()) != 0; }
  const Tensor& operator[](const Var& v) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Receives the upstream gradient and the forward output; returns one gradient
/// per input (an empty Tensor for inputs that need none).
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_out, const Tensor& out_value)>;

/// Append-only record of a forward computation. Node creation order is a
/// topological order, so backward is a single reverse sweep. A tape may be
/// differentiated once; a second backward() throws std::logic_error.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Records a node. When no input requires grad the backward function is dropped.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a 1x1 root.
  Gradients backward(const Var& root);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---- primitives ---------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// a (n x m) plus a 1 x m row broadcast to every row.
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var transpose(const Var& a);

Var sigmoid(const Var& a);
/// log(sigmoid(a)) evaluated without overflow.
Var log_sigmoid(const Var& a);
Var exp(const Var& a);
/// Throws DomainError if any entry is <= 0.
Var log(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a, double alpha = 1.0);
/// Elementwise clamp to [lo, hi]; gradient is zero where the clamp is active.
Var clamp(const Var& a, double lo, double hi);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Row softmax restricted to entries where mask != 0; masked entries output 0.
/// Every row needs at least one unmasked entry.
Var masked_softmax_rows(const Var& a, const Tensor& mask);
/// Replaces entries where mask != 0 with `fill`; no gradient flows to them.
Var masked_fill(const Var& a, const Tensor& mask, double fill);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t offset, std::size_t count);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column-wise mean over rows: n x m -> 1 x m.
Var mean_rows(const Var& a);

/// Sum of singular values. Backward uses U·Vᵀ of the thin SVD with singular
/// values below 1e-12 truncated.
Var nuclear_norm(const Var& a);

/// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(const Var& a, double lambda);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator-(const Var& a);

namespace testing {
/// When set, nuclear_norm's backward returns a deliberately wrong gradient.
/// Negative control for the self-check suite only.
extern std::atomic<bool> corrupt_nuclear_gradient;
}  // namespace testing

}  // namespace grada::ad
