#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <thread>

#include "grada/autodiff.hpp"
#include "grada/gradcheck.hpp"
#include "grada/graph.hpp"
#include "grada/linalg.hpp"
#include "oracles.hpp"

using namespace grada;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Autodiff gradient vs the oracle's finite differences, for a function built
// on a fresh tape from plain tensors.
double fd_error(const std::function<Var(Tape&, std::span<const Var>)>& build, const std::vector<Tensor>& x) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : x) vars.push_back(tape.variable(t));
  const ad::Gradients g = tape.backward(build(tape, vars));
  std::vector<Tensor> analytic;
  for (const Var& v : vars) analytic.push_back(g[v]);
  const auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    std::vector<Var> c;
    for (const Tensor& v : in) c.push_back(t.constant(v));
    return build(t, c).value().item();
  };
  return oracle::relative_error(analytic, oracle::fd_gradient(f, x));
}

Var weighted(Tape& t, const Var& x) {
  Rng rng(99);
  return ad::sum(ad::mul(x, t.constant(random_tensor(x.rows(), x.cols(), rng))));
}

}  // namespace

TEST_CASE("tensor basics") {
  const Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(matmul(Tensor::identity(2), m) == m);
  CHECK(transpose(transpose(m)) == m);
  CHECK(matmul_tn(m, m) == matmul(transpose(m), m));
  CHECK(matmul_nt(m, m) == matmul(m, transpose(m)));
  CHECK(sum(m) == 21.0);
  CHECK_THROWS_AS(matmul(m, m), ShapeError);
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(m.item(), ShapeError);
}

TEST_CASE("shape errors name both shapes") {
  Tape t;
  const Var a = t.constant(Tensor(2, 3)), b = t.constant(Tensor(2, 3));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, t.constant(Tensor(3, 2))), ShapeError);
}

TEST_CASE("primitive closed forms") {
  Tape t;
  CHECK(ad::sigmoid(t.constant(Tensor::scalar(0))).value().item() == 0.5);
  const Tensor sm = ad::softmax_rows(t.constant(Tensor(1, 2, 0.0))).value();
  CHECK(sm(0, 0) == 0.5);
  CHECK(sm(0, 1) == 0.5);
  const Tensor big = ad::softmax_rows(t.constant(Tensor::from_rows({{1000, -1000}}))).value();
  CHECK(big(0, 0) == doctest::Approx(1.0));
  CHECK(big.all_finite());
  CHECK_THROWS_AS(ad::log(t.constant(Tensor::scalar(0.0))), DomainError);
  CHECK_THROWS_AS(ad::log(t.constant(Tensor::scalar(-1.0))), DomainError);
  CHECK(ad::log_sigmoid(t.constant(Tensor::scalar(-800))).value().item() == doctest::Approx(-800));
}

TEST_CASE("backward closed forms") {
  Tape t;
  const Var x = t.variable(Tensor::scalar(3.0));
  const Var c = t.constant(Tensor::scalar(5.0));
  const ad::Gradients g = t.backward(ad::square(x) + c);
  CHECK(g[x].item() == 6.0);
  CHECK_FALSE(g.contains(c));
}

TEST_CASE("unreached variables get zero gradient") {
  Tape t;
  const Var x = t.variable(Tensor::scalar(2.0));
  const Var y = t.variable(Tensor(2, 2, 1.0));
  const ad::Gradients g = t.backward(ad::scale(x, 4.0));
  CHECK(g[x].item() == 4.0);
  CHECK(g[y] == Tensor(2, 2));
}

TEST_CASE("backward contract") {
  Tape t;
  const Var x = t.variable(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
  const Var s = ad::sum(x);
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), std::logic_error);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences to 1e-6") {
  Rng rng(3);
  const std::vector<int> labels{1, 0, 2, 2, 1};
  const double err = fd_error(
      [&](Tape&, std::span<const Var> x) {
        Tape& t = x[0].tape();
        Tensor onehot(5, 3);
        for (std::size_t i = 0; i < 5; ++i) onehot(i, labels[i]) = 1.0;
        return ad::scale(ad::sum(ad::mul(t.constant(onehot), ad::log_softmax_rows(x[0]))), -1.0 / 5);
      },
      {random_tensor(5, 3, rng, -3, 3)});
  CHECK(err < 1e-6);
}

TEST_CASE("every primitive passes the finite-difference oracle") {
  Rng rng(11);
  const Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng), pos = random_tensor(3, 4, rng, 0.3, 2);
  Tensor mask(3, 4, 1.0);
  mask(0, 0) = mask(2, 3) = 0.0;
  using Op = std::function<Var(const Var&)>;
  const std::vector<std::pair<const char*, Op>> unary = {
      {"transpose", [](const Var& x) { return ad::transpose(x); }},
      {"sigmoid", [](const Var& x) { return ad::sigmoid(x); }},
      {"log_sigmoid", [](const Var& x) { return ad::log_sigmoid(x); }},
      {"exp", [](const Var& x) { return ad::exp(x); }},
      {"square", [](const Var& x) { return ad::square(x); }},
      {"leaky_relu", [](const Var& x) { return ad::leaky_relu(x, 0.2); }},
      {"elu", [](const Var& x) { return ad::elu(x); }},
      {"relu", [](const Var& x) { return ad::relu(x); }},
      {"clamp", [](const Var& x) { return ad::clamp(x, -0.4, 0.4); }},
      {"softmax", [](const Var& x) { return ad::softmax_rows(x); }},
      {"log_softmax", [](const Var& x) { return ad::log_softmax_rows(x); }},
      {"masked_softmax", [mask](const Var& x) { return ad::masked_softmax_rows(x, mask); }},
      {"masked_fill", [mask](const Var& x) { return ad::masked_fill(x, mask, -2.0); }},
      {"slice_rows", [](const Var& x) { return ad::slice_rows(x, 1, 2); }},
      {"mean_rows", [](const Var& x) { return ad::mean_rows(x); }},
      {"mean", [](const Var& x) { return ad::mean(ad::square(x)); }},
      {"scale/add_scalar", [](const Var& x) { return ad::add_scalar(ad::scale(x, -1.5), 2.0); }},
      {"negate", [](const Var& x) { return -x; }},
      {"nuclear_norm", [](const Var& x) { return ad::nuclear_norm(x); }},
  };
  for (const auto& [name, op] : unary) {
    CAPTURE(name);
    CHECK(fd_error([op](Tape& t, std::span<const Var> x) { return weighted(t, op(x[0])); }, {a}) < 1e-5);
  }
  CHECK(fd_error([](Tape& t, std::span<const Var> x) { return weighted(t, ad::log(x[0])); }, {pos}) < 1e-5);
  CHECK(fd_error([](Tape& t, std::span<const Var> x) { return weighted(t, ad::matmul(x[0], x[1])); }, {a, b}) < 1e-5);
  CHECK(fd_error([](Tape& t, std::span<const Var> x) { return weighted(t, x[0] * x[1] - x[0] + 2.0 * x[1]); },
                 {a, pos}) < 1e-5);
  CHECK(fd_error([](Tape& t, std::span<const Var> x) { return weighted(t, ad::add_row(x[0], x[1])); },
                 {a, random_tensor(1, 4, rng)}) < 1e-5);
  CHECK(fd_error(
            [](Tape& t, std::span<const Var> x) {
              const std::array<Var, 2> r{x[0], x[1]};
              const std::array<Var, 2> c{ad::concat_rows(r), ad::concat_rows(r)};
              return weighted(t, ad::concat_cols(c));
            },
            {a, pos}) < 1e-5);
}

TEST_CASE("grad_reverse") {
  Tape t;
  const Tensor x0 = Tensor::from_rows({{1, -2}, {3, 0.5}});
  const Var x = t.variable(x0);
  const Var y = ad::grad_reverse(x, 1.0);
  CHECK(y.value() == x0);
  const Tensor w = Tensor::from_rows({{0.5, 1}, {-1, 2}});
  const ad::Gradients g = t.backward(ad::sum(ad::mul(y, t.constant(w))));
  CHECK(g[x] == -1.0 * w);

  auto grad_with = [&](double lambda, int times) {
    Tape tt;
    const Var xx = tt.variable(x0);
    Var yy = xx;
    for (int i = 0; i < times; ++i) yy = ad::grad_reverse(yy, lambda);
    return tt.backward(ad::sum(ad::mul(yy, tt.constant(w))))[xx];
  };
  CHECK(grad_with(0.0, 1) == Tensor(2, 2));
  CHECK(grad_with(1.0, 2) == w);
  CHECK(max_abs_diff(grad_with(0.3, 1), -0.3 * w) == 0.0);
}

TEST_CASE("svd closed forms") {
  const SvdResult d = svd(Tensor::from_rows({{3, 0}, {0, 4}}));
  CHECK(d.S(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(d.S(0, 1) == doctest::Approx(3.0).epsilon(1e-14));

  // rank one u vᵀ with ‖u‖ = 2, ‖v‖ = 3
  const Tensor u = Tensor::from_rows({{2}, {0}, {0}}), v = Tensor::from_rows({{0, 3}});
  const SvdResult r = svd(matmul(u, v));
  CHECK(r.S(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
  for (std::size_t i = 1; i < r.S.cols(); ++i) CHECK(std::abs(r.S(0, i)) < 1e-14);

  CHECK_THROWS_AS(svd(Tensor::from_rows({{1, NAN}})), DomainError);
  CHECK_THROWS_AS(svd(Tensor::from_rows({{INFINITY, 1}})), DomainError);
}

TEST_CASE("svd against the eigendecomposition oracle") {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor m = trial == 0 ? random_tensor(6, 3, rng) : random_tensor(dim(rng), dim(rng), rng, -5, 5);
    const SvdResult d = svd(m);
    const std::vector<double> ref = oracle::singular_values(m);
    REQUIRE(d.S.cols() == std::min(m.rows(), m.cols()));
    for (std::size_t i = 0; i < d.S.cols(); ++i) {
      CHECK(std::abs(d.S(0, i) - ref[i]) < 1e-8);
      CHECK(d.S(0, i) >= 0.0);
      if (i > 0) CHECK(d.S(0, i) <= d.S(0, i - 1));
    }
    Tensor us = d.U;
    for (std::size_t i = 0; i < us.rows(); ++i)
      for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= d.S(0, k);
    CHECK(frobenius_norm(matmul_nt(us, d.V) - m) <= 1e-10 * std::max(1.0, frobenius_norm(m)));
    const Tensor eye = Tensor::identity(d.S.cols());
    CHECK(max_abs_diff(matmul_tn(d.U, d.U), eye) < 1e-10);
    CHECK(max_abs_diff(matmul_tn(d.V, d.V), eye) < 1e-10);
    CHECK(nuclear_norm(m) >= frobenius_norm(m) - 1e-12);
  }
}

TEST_CASE("svd of rank-deficient and zero matrices") {
  const SvdResult z = svd(Tensor(3, 2));
  CHECK(sum(z.S) == 0.0);
  CHECK(max_abs_diff(matmul_tn(z.U, z.U), Tensor::identity(2)) < 1e-12);
  const Tensor rank1 = Tensor::from_rows({{1, 2}, {2, 4}, {3, 6}});
  const SvdResult d = svd(rank1);
  CHECK(max_abs_diff(matmul_tn(d.U, d.U), Tensor::identity(2)) < 1e-10);
  CHECK(d.S(0, 1) < 1e-12);
}

TEST_CASE("nuclear-norm gradient is U Vᵀ") {
  Rng rng(8);
  const Tensor m = random_tensor(5, 3, rng);
  Tape t;
  const Var x = t.variable(m);
  const Tensor g = t.backward(ad::nuclear_norm(x))[x];
  const SvdResult d = svd(m);
  CHECK(max_abs_diff(g, matmul_nt(d.U, d.V)) < 1e-12);
  const auto f = [](const std::vector<Tensor>& in) { return oracle::nuclear_norm(in[0]); };
  CHECK(oracle::relative_error({g}, oracle::fd_gradient(f, {m})) < 1e-6);
}

TEST_CASE("nuclear-norm subgradient truncates tiny singular values") {
  const Tensor rank1 = Tensor::from_rows({{1, 2}, {2, 4}});
  const SvdResult d = svd(rank1);
  const Tensor g = nuclear_norm_subgradient(d);
  // only the leading pair contributes: g = u1 v1ᵀ
  Tensor expect(2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) expect(i, j) = d.U(i, 0) * d.V(j, 0);
  CHECK(max_abs_diff(g, expect) < 1e-12);
}

TEST_CASE("corrupted nuclear gradient is detected by check_gradients") {
  Rng rng(2);
  const Tensor m = random_tensor(4, 2, rng);
  const ScalarFn f = [](Tape&, std::span<const Var> x) { return ad::nuclear_norm(x[0]); };
  CHECK(check_gradients(f, {m}).relative_error < 1e-8);
  ad::testing::corrupt_nuclear_gradient = true;
  const double bad = check_gradients(f, {m}).relative_error;
  ad::testing::corrupt_nuclear_gradient = false;
  CHECK(bad > 0.1);
}

TEST_CASE("independent tapes on separate threads") {
  std::vector<double> out(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([i, &out] {
      Tape t;
      const Var x = t.variable(Tensor::scalar(i + 1.0));
      out[i] = t.backward(ad::square(x))[x].item();
    });
  for (auto& th : threads) th.join();
  for (int i = 0; i < 4; ++i) CHECK(out[i] == 2.0 * (i + 1));
}
