#include "grada/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "grada/linalg.hpp"

namespace grada::ad {

namespace testing {
std::atomic<bool> corrupt_nuclear_gradient{false};
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](const Var& v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw std::out_of_range("no gradient recorded for node " + std::to_string(v.id()));
  return it->second;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::invalid_argument("record: input belongs to a different tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& root) {
  if (&root.tape() != this) throw std::invalid_argument("backward: root belongs to a different tape");
  if (consumed_) throw std::logic_error("backward: tape has already been differentiated");
  const Tensor& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw ShapeError("backward: root must be a scalar, got " + rv.shape_string());
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[root.id()] = Tensor::scalar(1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || grads[i].empty()) continue;
    std::vector<Tensor> in_grads = node.backward(grads[i], node.value);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t src = node.inputs[k];
      if (!nodes_[src].requires_grad || k >= in_grads.size() || in_grads[k].empty()) continue;
      if (grads[src].empty())
        grads[src] = std::move(in_grads[k]);
      else
        grads[src] += in_grads[k];
    }
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].requires_grad) continue;
    if (grads[i].empty())
      out.grads_.emplace(i, Tensor(nodes_[i].value.rows(), nodes_[i].value.cols()));
    else
      out.grads_.emplace(i, std::move(grads[i]));
  }
  return out;
}

namespace {

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

// Elementwise unary op whose derivative is expressible from input and output.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out = map(a.value(), fwd);
  return a.tape().record(std::move(out), {a}, [a, deriv](const Tensor& g, const Tensor& y) {
    const Tensor& x = a.value();
    Tensor dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * deriv(x[i], y[i]);
    return std::vector<Tensor>{std::move(dx)};
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

Tensor row_softmax(const Tensor& x, const Tensor* mask) {
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (!mask || (*mask)(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (mx == -INFINITY) throw DomainError("masked_softmax_rows: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= z;
  }
  return y;
}

std::vector<Tensor> softmax_backward(const Tensor& g, const Tensor& y) {
  Tensor dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
  }
  return {std::move(dx)};
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tensor out = grada::matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    std::vector<Tensor> r(2);
    if (a.requires_grad()) r[0] = matmul_nt(g, b.value());
    if (b.requires_grad()) r[1] = matmul_tn(a.value(), g);
    return r;
  });
}

Var add(const Var& a, const Var& b) {
  Tensor out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g, g}; });
}

Var add_row(const Var& a, const Var& row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols())
    throw ShapeError("add_row: row " + r.shape_string() + " does not broadcast over " + x.shape_string());
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r(0, j);
  return a.tape().record(std::move(out), {a, row}, [](const Tensor& g, const Tensor&) {
    Tensor dr(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
    return std::vector<Tensor>{g, std::move(dr)};
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g, -1.0 * g}; });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = hadamard(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    std::vector<Tensor> r(2);
    if (a.requires_grad()) r[0] = hadamard(g, b.value());
    if (b.requires_grad()) r[1] = hadamard(g, a.value());
    return r;
  });
}

Var scale(const Var& a, double s) {
  return a.tape().record(s * a.value(), {a},
                         [s](const Tensor& g, const Tensor&) { return std::vector<Tensor>{s * g}; });
}

Var add_scalar(const Var& a, double s) {
  return a.tape().record(map(a.value(), [s](double v) { return v + s; }), {a},
                         [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g}; });
}

Var transpose(const Var& a) {
  return a.tape().record(grada::transpose(a.value()), {a}, [](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{grada::transpose(g)};
  });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(const Var& a) {
  return unary(a, stable_log_sigmoid, [](double x, double) { return stable_sigmoid(-x); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("log: non-positive operand " + std::to_string(v));
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var elu(const Var& a, double alpha) {
  return unary(a, [alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); },
               [alpha](double x, double y) { return x > 0 ? 1.0 : y + alpha; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(const Var& a) {
  return a.tape().record(row_softmax(a.value(), nullptr), {a}, softmax_backward);
}

Var masked_softmax_rows(const Var& a, const Tensor& mask) {
  require_same_shape(a.value(), mask, "masked_softmax_rows");
  return a.tape().record(row_softmax(a.value(), &mask), {a}, softmax_backward);
}

Var log_softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) - lse;
  }
  return a.tape().record(std::move(out), {a}, [](const Tensor& g, const Tensor& y) {
    Tensor dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var masked_fill(const Var& a, const Tensor& mask, double fill) {
  require_same_shape(a.value(), mask, "masked_fill");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i] != 0.0) out[i] = fill;
  return a.tape().record(std::move(out), {a}, [mask](const Tensor& g, const Tensor&) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (mask[i] != 0.0) dx[i] = 0.0;
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + parts[0].value().shape_string() + " vs " +
                       p.value().shape_string());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off * cols);
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [inputs, offsets](const Tensor& g, const Tensor&) {
    std::vector<Tensor> r(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k].requires_grad()) continue;
      const std::size_t n = inputs[k].rows(), c = g.cols();
      std::vector<double> d(g.data().begin() + offsets[k] * c, g.data().begin() + (offsets[k] + n) * c);
      r[k] = Tensor(n, c, std::move(d));
    }
    return r;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + parts[0].value().shape_string() + " vs " +
                       p.value().shape_string());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [inputs, offsets](const Tensor& g, const Tensor&) {
    std::vector<Tensor> r(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k].requires_grad()) continue;
      Tensor d(g.rows(), inputs[k].cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = g(i, offsets[k] + j);
      r[k] = std::move(d);
    }
    return r;
  });
}

Var slice_rows(const Var& a, std::size_t offset, std::size_t count) {
  const Tensor& x = a.value();
  if (offset + count > x.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                     ") out of range for " + x.shape_string());
  const std::size_t c = x.cols();
  std::vector<double> d(x.data().begin() + offset * c, x.data().begin() + (offset + count) * c);
  const std::size_t total = x.rows();
  return a.tape().record(Tensor(count, c, std::move(d)), {a},
                         [offset, total](const Tensor& g, const Tensor&) {
                           Tensor dx(total, g.cols());
                           std::copy(g.data().begin(), g.data().end(), dx.data().begin() + offset * g.cols());
                           return std::vector<Tensor>{std::move(dx)};
                         });
}

Var sum(const Var& a) {
  const std::size_t r = a.rows(), c = a.cols();
  return a.tape().record(Tensor::scalar(grada::sum(a.value())), {a}, [r, c](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{Tensor(r, c, g.item())};
  });
}

Var mean(const Var& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r * c == 0) throw ShapeError("mean: empty tensor");
  const double n = static_cast<double>(r * c);
  return a.tape().record(Tensor::scalar(grada::sum(a.value()) / n), {a},
                         [r, c, n](const Tensor& g, const Tensor&) {
                           return std::vector<Tensor>{Tensor(r, c, g.item() / n)};
                         });
}

Var mean_rows(const Var& a) {
  const Tensor& x = a.value();
  if (x.rows() == 0) throw ShapeError("mean_rows: no rows");
  const double n = static_cast<double>(x.rows());
  Tensor out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  out *= 1.0 / n;
  const std::size_t rows = x.rows();
  return a.tape().record(std::move(out), {a}, [rows, n](const Tensor& g, const Tensor&) {
    Tensor dx(rows, g.cols());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx(i, j) = g(0, j) / n;
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var nuclear_norm(const Var& a) {
  auto dec = std::make_shared<SvdResult>(svd(a.value()));
  return a.tape().record(Tensor::scalar(grada::sum(dec->S)), {a}, [dec](const Tensor& g, const Tensor&) {
    Tensor sub = nuclear_norm_subgradient(*dec);
    if (testing::corrupt_nuclear_gradient.load()) sub *= 0.5;
    return std::vector<Tensor>{g.item() * sub};
  });
}

Var grad_reverse(const Var& a, double lambda) {
  return a.tape().record(a.value(), {a}, [lambda](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{-lambda * g};
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator*(double s, const Var& a) { return scale(a, s); }
Var operator-(const Var& a) { return scale(a, -1.0); }

}  // namespace grada::ad
