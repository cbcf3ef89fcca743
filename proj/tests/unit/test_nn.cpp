#include "dgrl/errors.hpp"
#include "dgrl/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dgrl;
using namespace dgrl::nn;

namespace {

DenseLayer layer(DenseMatrix w, Vector b, Activation a) {
  DenseLayer l;
  l.weights = std::move(w);
  l.bias = std::move(b);
  l.activation = a;
  return l;
}

// Plain loops over std::vector, independent of Eigen.
std::vector<double> oracle_forward(const Mlp& model, std::vector<double> x) {
  for (const auto& l : model.layers()) {
    std::vector<double> y(static_cast<std::size_t>(l.out_dim()));
    for (Eigen::Index o = 0; o < l.out_dim(); ++o) {
      double acc = l.bias[o];
      for (Eigen::Index i = 0; i < l.in_dim(); ++i) acc += l.weights(o, i) * x[static_cast<std::size_t>(i)];
      if (l.activation == Activation::relu) acc = acc > 0.0 ? acc : 0.0;
      if (l.activation == Activation::tanh) acc = std::tanh(acc);
      y[static_cast<std::size_t>(o)] = acc;
    }
    x = std::move(y);
  }
  return x;
}

// Loss = sum_o c_o * y_o with fixed coefficients, so dL/dy = c.
double weighted_output(const Mlp& model, const DenseMatrix& input, const DenseMatrix& coeff) {
  return (model.forward(input).array() * coeff.array()).sum();
}

DenseMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  DenseMatrix w = DenseMatrix::Identity(2, 2);
  Mlp m({layer(w, Vector::Zero(2), Activation::identity)});
  Vector x(2);
  x << 1, 2;
  const Vector y = m.forward(x);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("zero weights return the bias") {
  Vector b(2);
  b << 3, 4;
  Mlp m({layer(DenseMatrix::Zero(2, 2), b, Activation::identity)});
  Vector x(2);
  x << -7.5, 123.0;
  const Vector y = m.forward(x);
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 4.0);
}

TEST_CASE("two-layer relu forward matches a hand-rolled multiply") {
  Rng rng(11);
  const std::vector<int> sizes{5, 7, 3};
  const Mlp m = Mlp::make(sizes, Activation::relu, Activation::identity, rng);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(5);
    for (auto& v : x) v = nd(rng);
    const Vector y = m.forward(Eigen::Map<const Vector>(x.data(), 5).eval());
    const auto ref = oracle_forward(m, x);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects a wrong input width") {
  Rng rng(1);
  const std::vector<int> sizes{3, 2};
  const Mlp m = Mlp::make(sizes, Activation::relu, Activation::identity, rng);
  CHECK_THROWS_AS(m.forward(Vector::Zero(4).eval()), ConfigError);
}

TEST_CASE("layers must chain") {
  CHECK_THROWS_AS(Mlp({layer(DenseMatrix::Zero(3, 2), Vector::Zero(3), Activation::relu),
                       layer(DenseMatrix::Zero(1, 4), Vector::Zero(1), Activation::identity)}),
                  ConfigError);
}

TEST_CASE("glorot initialisation stays within its limit") {
  Rng rng(5);
  const std::vector<int> sizes{10, 20, 4};
  const Mlp m = Mlp::make(sizes, Activation::relu, Activation::identity, rng);
  for (const auto& l : m.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    CHECK(l.weights.cwiseAbs().maxCoeff() <= limit);
    CHECK(l.bias.isZero());
  }
  CHECK(m.param_count() == static_cast<std::size_t>(10 * 20 + 20 + 20 * 4 + 4));
}

TEST_CASE("backward through an identity layer") {
  Mlp m({layer(DenseMatrix::Identity(2, 2), Vector::Zero(2), Activation::identity)});
  GradTape tape;
  DenseMatrix x(1, 2);
  x << 0.3, -0.4;
  m.forward(x, &tape);
  DenseMatrix g(1, 2);
  g << 1, 0;
  const auto bp = m.backward(tape, g);
  CHECK(bp.input_grad(0, 0) == 1.0);
  CHECK(bp.input_grad(0, 1) == 0.0);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  Rng rng(2);
  const std::vector<int> sizes{4, 6, 3};
  const Mlp m = Mlp::make(sizes, Activation::tanh, Activation::identity, rng);
  GradTape tape;
  m.forward(random_matrix(5, 4, rng), &tape);
  const auto bp = m.backward(tape, DenseMatrix::Zero(5, 3));
  for (double v : bp.params.flat()) CHECK(v == 0.0);
  CHECK(bp.input_grad.isZero());
}

TEST_CASE("backward without a tape is a usage error") {
  Rng rng(2);
  const std::vector<int> sizes{2, 2};
  const Mlp m = Mlp::make(sizes, Activation::relu, Activation::identity, rng);
  GradTape tape;
  CHECK_THROWS_AS(m.backward(tape, DenseMatrix::Zero(1, 2)), UsageError);
}

TEST_CASE("parameter and input gradients agree with central differences") {
  for (auto act : {Activation::relu, Activation::tanh, Activation::identity}) {
    CAPTURE(to_string(act));
    Rng rng(21);
    const std::vector<int> sizes{4, 6, 5, 3};
    Mlp m = Mlp::make(sizes, act, Activation::identity, rng);
    for (auto& l : m.mutable_layers()) l.bias = random_matrix(l.out_dim(), 1, rng).col(0);
    DenseMatrix x = random_matrix(3, 4, rng);
    DenseMatrix coeff = random_matrix(3, 3, rng);
    GradTape tape;
    m.forward(x, &tape);
    const auto bp = m.backward(tape, coeff);
    const auto analytic = bp.params.flat();

    // Independent central differences with step 1e-4.
    auto params = m.flat_params();
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mlp probe = m;
      auto p = params;
      p[i] += h;
      probe.set_flat_params(p);
      const double up = weighted_output(probe, x, coeff);
      p[i] -= 2 * h;
      probe.set_flat_params(p);
      const double down = weighted_output(probe, x, coeff);
      const double numeric = (up - down) / (2 * h);
      const double rel = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-5);

    // The library checker on the same loss, input side.
    std::vector<double> flat_x(x.data(), x.data() + x.size());
    std::vector<double> grad_x(bp.input_grad.data(), bp.input_grad.data() + bp.input_grad.size());
    const auto report = finite_diff_check(
        [&](std::span<const double> v) {
          DenseMatrix xi = Eigen::Map<const DenseMatrix>(v.data(), 3, 4);
          return weighted_output(m, xi, coeff);
        },
        flat_x, grad_x, 1e-5);
    CHECK_MESSAGE(report.passed, report.message);
  }
}

TEST_CASE("finite difference checker on closed-form losses") {
  std::vector<double> p{0.5, -1.25, 2.0, 3.5};
  std::vector<double> two_p;
  for (double v : p) two_p.push_back(2 * v);
  const auto quad = finite_diff_check(
      [](std::span<const double> q) {
        double s = 0;
        for (double v : q) s += v * v;
        return s;
      },
      p, two_p, 1e-6);
  CHECK(quad.passed);
  CHECK(quad.max_rel_error < 1e-6);

  std::vector<double> slope{1.0, -2.0, 0.5, 4.0};
  const auto lin = finite_diff_check(
      [&](std::span<const double> q) {
        double s = 0;
        for (std::size_t i = 0; i < q.size(); ++i) s += slope[i] * q[i];
        return s;
      },
      p, slope, 1e-6);
  CHECK(lin.max_rel_error < 1e-9);

  std::vector<double> wrong{1.0, -2.0, 0.5, 5.0};
  const auto bad = finite_diff_check(
      [&](std::span<const double> q) {
        double s = 0;
        for (std::size_t i = 0; i < q.size(); ++i) s += slope[i] * q[i];
        return s;
      },
      p, wrong, 1e-6);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_index == 3);

  const auto nonfinite = finite_diff_check([](std::span<const double>) { return std::nan(""); }, p, slope, 1e-6);
  CHECK_FALSE(nonfinite.passed);
  CHECK_FALSE(nonfinite.message.empty());
}

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g{0.0, 0.0, 0.0};
  AdamState st;
  adam_step(p, g, st, AdamConfig{});
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam single step matches the closed form") {
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  std::vector<double> p{0.5, -0.3};
  const std::vector<double> g{0.2, -0.7};
  AdamState st;
  st.m = {0.05, 0.01};
  st.v = {0.002, 0.004};
  st.t = 3;
  std::vector<double> expect(2);
  for (int i = 0; i < 2; ++i) {
    const double m = 0.9 * st.m[static_cast<std::size_t>(i)] + 0.1 * g[static_cast<std::size_t>(i)];
    const double v = 0.999 * st.v[static_cast<std::size_t>(i)] + 0.001 * g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
    const double mh = m / (1 - std::pow(0.9, 4));
    const double vh = v / (1 - std::pow(0.999, 4));
    expect[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] - 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  adam_step(p, g, st, cfg);
  CHECK(st.t == 4);
  for (int i = 0; i < 2; ++i) CHECK(p[static_cast<std::size_t>(i)] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("adam moves against a constant gradient") {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{1.5, -0.5};
  AdamState st;
  for (int i = 0; i < 100; ++i) adam_step(p, g, st, AdamConfig{});
  CHECK(p[0] < 0.0);
  CHECK(p[1] > 0.0);
}

TEST_CASE("adam aborts on a non-finite gradient") {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{0.0, std::nan("")};
  AdamState st;
  CHECK_THROWS_AS(adam_step(p, g, st, AdamConfig{}), TrainingFault);
}

TEST_CASE("training a small regression net reduces the loss deterministically") {
  auto run = [] {
    Rng rng(9);
    const std::vector<int> sizes{2, 16, 1};
    Mlp m = Mlp::make(sizes, Activation::tanh, Activation::identity, rng);
    Adam opt(m, AdamConfig{0.01});
    DenseMatrix x = random_matrix(32, 2, rng);
    DenseMatrix y = (x.col(0).array() * x.col(1).array()).matrix();
    double first = 0, last = 0;
    for (int it = 0; it < 300; ++it) {
      GradTape tape;
      const DenseMatrix out = m.forward(x, &tape);
      const DenseMatrix diff = out - y;
      const double loss = diff.squaredNorm() / 32.0;
      if (it == 0) first = loss;
      last = loss;
      opt.step(m, m.backward(tape, diff * (2.0 / 32.0)).params);
    }
    return std::make_tuple(first, last, m.flat_params());
  };
  const auto [f1, l1, p1] = run();
  const auto [f2, l2, p2] = run();
  CHECK(l1 < 0.5 * f1);
  CHECK(p1 == p2);
  CHECK(l1 == l2);
}
