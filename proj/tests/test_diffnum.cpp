#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "trace/gradcheck.hpp"
#include "trace/graph.hpp"
#include "trace/kernels.hpp"
#include "trace/numeric.hpp"
#include "trace/rng.hpp"

using namespace trace;

namespace {

// Standard normal CDF by Simpson quadrature over the pdf: an oracle
// independent of the erf-based implementation.
double normal_cdf_quadrature(double x) {
  const int steps = 2000;
  double lo = 0.0, hi = std::fabs(x);
  double h = (hi - lo) / steps;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double acc = pdf(lo) + pdf(hi);
  for (int i = 1; i < steps; ++i) acc += 2.0 * (1 + i % 2) * pdf(lo + i * h);
  double integral = acc * h / 3.0;
  return x >= 0 ? 0.5 + integral : 0.5 - integral;
}

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Gradient check of a single-op scalar loss: loss = mean(op(inputs)).
void check_op_gradient(const std::function<VarId(Graph&, std::vector<VarId>)>& op,
                       std::vector<Tensor> inputs, double tol = 1e-4) {
  ParamStore store;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    store.add("x" + std::to_string(i), inputs[i]);
  LossFn fn = [&](const ParamStore& p, GradStore* gs) {
    Graph g;
    std::vector<VarId> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      vars.push_back(g.param(p, "x" + std::to_string(i)));
    VarId out = op(g, vars);
    // weight the output elements asymmetrically so symmetric errors cannot cancel
    const Tensor& val = g.value(out);
    Tensor w = Tensor::zeros_like(val);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.7 * static_cast<double>(i % 5);
    VarId loss = g.sum(g.mul(out, g.input(w)));
    double v = g.scalar(loss);
    if (gs) {
      g.backward(loss);
      g.accumulate_leaf_grads(*gs);
    }
    return v;
  };
  GradCheckReport report = check_gradient(fn, store);
  CAPTURE(report.worst_param);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.max_rel_error < tol);
}

}  // namespace

TEST_CASE("tensor shape and data contracts") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  Tensor s = Tensor::scalar(4.5);
  CHECK(s.size() == 1);
  CHECK(s[0] == 4.5);
}

TEST_CASE("rng streams are counter-deterministic") {
  RngStream a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    double va = a.uniform();
    CHECK(va == b.uniform());
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  bool any_diff = false;
  for (int i = 0; i < 10; ++i) any_diff |= a.uniform() != c.uniform();
  CHECK(any_diff);
  CHECK(derive_seed(42, "data") != derive_seed(42, "init"));
  CHECK(derive_seed(42, "data") == derive_seed(42, "data"));
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 40);
    std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * 40);
    std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 40);
    std::vector<double> a(m * k), b(k * n);
    for (double& v : a) v = 2.0 * rng.uniform() - 1.0;
    for (double& v : b) v = 2.0 * rng.uniform() - 1.0;

    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n, trial % 2 == 0);
    kernels::matmul_parallel(a.data(), b.data(), c2.data(), m, k, n, trial % 2 == 0);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);

    std::vector<double> d1(k * n, 0.25), d2(k * n, 0.25);
    kernels::matmul_at_b_serial(a.data(), c1.data(), d1.data(), m, k, n, trial % 2 == 1);
    kernels::matmul_at_b_parallel(a.data(), c1.data(), d2.data(), m, k, n, trial % 2 == 1);
    CHECK(std::memcmp(d1.data(), d2.data(), d1.size() * sizeof(double)) == 0);

    std::vector<double> e1(m * k, -1.0), e2(m * k, -1.0);
    kernels::matmul_a_bt_serial(c1.data(), b.data(), e1.data(), m, n, k, true);
    kernels::matmul_a_bt_parallel(c1.data(), b.data(), e2.data(), m, n, k, true);
    CHECK(std::memcmp(e1.data(), e2.data(), e1.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("matmul transpose variants against the plain kernel") {
  RngStream rng(11);
  std::size_t m = 5, k = 4, n = 3;
  Tensor a = random_tensor({m, k}, rng);
  Tensor b = random_tensor({k, n}, rng);

  Graph g;
  VarId at = g.transpose(g.input(a));
  VarId bt = g.transpose(g.input(b));
  const Tensor& ref = g.value(g.matmul(g.input(a), g.input(b)));

  std::vector<double> c1(m * n);
  kernels::matmul_at_b(g.value(at).data(), b.data(), c1.data(), k, m, n);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  std::vector<double> c2(m * n);
  kernels::matmul_a_bt(a.data(), g.value(bt).data(), c2.data(), m, k, n);
  for (std::size_t i = 0; i < c2.size(); ++i) CHECK(c2[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("gelu examples") {
  Graph g;
  VarId y = g.gelu(g.input(Tensor::vec({0.0, 1.0, 10.0, -10.0})));
  const Tensor& v = g.value(y);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == doctest::Approx(0.8413).epsilon(0).scale(1.0).epsilon(1e-4));
  CHECK(v[1] == doctest::Approx(1.0 * normal_cdf_quadrature(1.0)).epsilon(1e-9));
  CHECK(v[2] == doctest::Approx(10.0).epsilon(1e-7));
  CHECK(std::fabs(v[3]) < 1e-6);
}

TEST_CASE("layer_norm examples") {
  Graph g;
  Tensor gamma1({2});
  gamma1.fill(1.0);
  SUBCASE("constant row maps to zeros") {
    VarId y = g.layer_norm(g.input(Tensor::vec({3.0, 3.0, 3.0})),
                           g.input(Tensor::vec({1.0, 1.0, 1.0})),
                           g.input(Tensor::vec({0.0, 0.0, 0.0})));
    for (double v : g.value(y).values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two-point row normalizes to +-1") {
    VarId y = g.layer_norm(g.input(Tensor::vec({1.0, 3.0})), g.input(gamma1),
                           g.input(Tensor({2})), 1e-12);
    CHECK(g.value(y)[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(g.value(y)[1] == doctest::Approx(1.0).epsilon(1e-5));
  }
  SUBCASE("zero gamma collapses to beta") {
    VarId y = g.layer_norm(g.input(Tensor::vec({0.4, 2.0, -1.0})),
                           g.input(Tensor({3})), g.input(Tensor::vec({7.0, 7.0, 7.0})));
    for (double v : g.value(y).values()) CHECK(v == 7.0);
  }
  SUBCASE("pre-affine rows have zero mean and unit variance") {
    RngStream rng(3);
    Tensor x = random_tensor({4, 16}, rng);
    for (std::size_t c = 0; c < 16; ++c) x.at(3, c) = (c % 2 ? 1e-2 : -1e-2);  // small deviation
    Tensor gamma({16});
    gamma.fill(1.0);
    VarId y = g.layer_norm(g.input(x), g.input(gamma), g.input(Tensor({16})), 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < 16; ++c) mu += g.value(y).at(r, c);
      mu /= 16;
      for (std::size_t c = 0; c < 16; ++c) {
        double d = g.value(y).at(r, c) - mu;
        var += d * d;
      }
      var /= 16;
      CHECK(std::fabs(mu) < 1e-9);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax examples and invariants") {
  SUBCASE("reference caption scores") {
    double probs[3];
    double scores[3] = {-6.7855, -5.4245, -3.1250};
    stable_softmax(scores, probs, 3);
    CHECK(probs[0] == doctest::Approx(0.0228).epsilon(0).scale(1).epsilon(1e-3));
    CHECK(probs[1] == doctest::Approx(0.0891).epsilon(1e-3));
    CHECK(probs[2] == doctest::Approx(0.8881).epsilon(1e-3));
  }
  SUBCASE("uniformity, normalization, shift invariance") {
    Graph g;
    VarId u = g.softmax(g.input(Tensor::vec({4.0, 4.0, 4.0, 4.0})));
    for (double v : g.value(u).values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    RngStream rng(5);
    Tensor x = random_tensor({3, 7}, rng, -30.0, 30.0);
    VarId y = g.softmax(g.input(x));
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        double p = g.value(y).at(r, c);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        sum += p;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }

    Tensor shifted = x;
    for (double& v : shifted.values()) v += 123.456;
    VarId y2 = g.softmax(g.input(shifted));
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(g.value(y2)[i] == doctest::Approx(g.value(y)[i]).epsilon(1e-12));
  }
}

TEST_CASE("dropout contract") {
  RngStream rng(99);
  Tensor x = Tensor::vec({1.0, -2.0, 3.0, 0.5});
  SUBCASE("eval mode and p=0 are the identity") {
    Graph g;
    VarId in = g.input(x);
    CHECK(g.dropout(in, 0.7, RunMode::eval, rng) == in);
    CHECK(g.dropout(in, 0.0, RunMode::train, rng) == in);
    CHECK_THROWS_AS(g.dropout(in, 1.0, RunMode::train, rng), std::invalid_argument);
  }
  SUBCASE("train mode preserves the mean") {
    const int draws = 100000;
    double x0 = 2.0;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) {
      Graph g;
      VarId y = g.dropout(g.input(Tensor::scalar(x0)), 0.5, RunMode::train, rng);
      sum += g.value(y)[0];
    }
    double mean = sum / draws;
    double se = x0 / std::sqrt(static_cast<double>(draws));  // sd of inverted dropout at p=.5
    CHECK(std::fabs(mean - x0) < 3.0 * se);
  }
  SUBCASE("same seed gives bit-identical masks") {
    RngStream r1(4), r2(4);
    Graph g;
    VarId y1 = g.dropout(g.input(x), 0.4, RunMode::train, r1);
    VarId y2 = g.dropout(g.input(x), 0.4, RunMode::train, r2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.value(y1)[i] == g.value(y2)[i]);
  }
}

TEST_CASE("linear examples") {
  Graph g;
  SUBCASE("identity and zero weight") {
    VarId x = g.input(Tensor::vec({1.5, -2.5}));
    VarId eye = g.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    VarId zero = g.input(Tensor({2, 2}));
    VarId b = g.input(Tensor::vec({4.0, 5.0}));
    VarId y1 = g.linear(x, eye, g.input(Tensor({2})));
    CHECK(g.value(y1)[0] == 1.5);
    CHECK(g.value(y1)[1] == -2.5);
    VarId y2 = g.linear(x, zero, b);
    CHECK(g.value(y2)[0] == 4.0);
    CHECK(g.value(y2)[1] == 5.0);
  }
  SUBCASE("hand matrix oracle") {
    VarId y = g.linear(g.input(Tensor::vec({1.0, 2.0})),
                       g.input(Tensor::matrix(2, 2, {1, 0, 1, 1})),
                       g.input(Tensor::vec({0.0, 1.0})));
    CHECK(g.value(y)[0] == 3.0);
    CHECK(g.value(y)[1] == 3.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    VarId x = g.input(Tensor::vec({1.0, 2.0, 3.0}));
    VarId w = g.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    CHECK_THROWS_WITH_AS(g.linear(x, w, g.input(Tensor({2}))),
                         doctest::Contains("[1x3]"), std::invalid_argument);
  }
}

TEST_CASE("check_gradient examples") {
  SUBCASE("x^2 at 3") {
    ParamStore store;
    store.add("x", Tensor::scalar(3.0));
    LossFn fn = [](const ParamStore& p, GradStore* gs) {
      Graph g;
      VarId x = g.param(p, "x");
      VarId loss = g.mul(x, x);
      if (gs) {
        g.backward(loss);
        g.accumulate_leaf_grads(*gs);
      }
      return g.scalar(loss);
    };
    GradStore gs;
    CHECK(fn(store, &gs) == 9.0);
    CHECK((*gs.find("x"))[0] == doctest::Approx(6.0).epsilon(1e-12));
    GradCheckReport report = check_gradient(fn, store);
    CHECK(report.max_rel_error < 1e-7);
    CHECK(report.checked == 1);
  }
  SUBCASE("perturbed gradient is flagged with the parameter name") {
    ParamStore store;
    store.add("a", Tensor::scalar(1.25));
    store.add("b", Tensor::scalar(-0.5));
    LossFn fn = [](const ParamStore& p, GradStore* gs) {
      Graph g;
      VarId loss = g.mul(g.param(p, "a"), g.param(p, "b"));
      if (gs) {
        g.backward(loss);
        g.accumulate_leaf_grads(*gs);
        gs->accumulate("b", Tensor::scalar(0.1));  // deliberate corruption
      }
      return g.scalar(loss);
    };
    GradCheckReport report = check_gradient(fn, store);
    CHECK(report.max_rel_error > 1e-2);
    CHECK(report.worst_param == "b");
  }
  SUBCASE("non-finite loss raises a diagnostic") {
    ParamStore store;
    store.add("x", Tensor::scalar(0.0));
    LossFn fn = [](const ParamStore& p, GradStore*) {
      Graph g;
      return g.scalar(g.log(g.param(p, "x")));
    };
    CHECK_THROWS_WITH_AS(check_gradient(fn, store), doctest::Contains("not finite"),
                         std::runtime_error);
  }
}

TEST_CASE("every op gradient matches central differences on randomized input") {
  RngStream rng(21);
  for (int seed_trial = 0; seed_trial < 3; ++seed_trial) {
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.add(v[0], v[1]); },
                      {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.mul(v[0], v[1]); },
                      {random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.affine(v[0], -1.7, 0.3); },
                      {random_tensor({7}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.matmul(v[0], v[1]); },
                      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.bias_add(v[0], v[1]); },
                      {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.gelu(v[0]); },
                      {random_tensor({4, 3}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.sigmoid(v[0]); },
                      {random_tensor({6}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.log(v[0]); },
                      {random_tensor({5}, rng, 0.2, 2.0)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.clamp(v[0], -1.0, 1.0); },
                      {random_tensor({8}, rng)});
    check_op_gradient(
        [](Graph& g, std::vector<VarId> v) { return g.layer_norm(v[0], v[1], v[2]); },
        {random_tensor({3, 6}, rng), random_tensor({6}, rng, 0.5, 1.5),
         random_tensor({6}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.softmax(v[0]); },
                      {random_tensor({2, 5}, rng)});
    check_op_gradient(
        [](Graph& g, std::vector<VarId> v) {
          return g.softmax_masked(v[0], {1, 0, 1, 1, 0});
        },
        {random_tensor({2, 5}, rng)});
    check_op_gradient(
        [](Graph& g, std::vector<VarId> v) { return g.masked_mean_rows(v[0], {1, 0, 1, 1}); },
        {random_tensor({4, 3}, rng)});
    check_op_gradient(
        [](Graph& g, std::vector<VarId> v) { return g.gather_rows(v[0], {2, 0, 2}); },
        {random_tensor({4, 3}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.concat(v[0], v[1]); },
                      {random_tensor({4}, rng), random_tensor({3}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.concat(v[0], v[1]); },
                      {random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.slice_cols(v[0], 1, 3); },
                      {random_tensor({3, 5}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.transpose(v[0]); },
                      {random_tensor({3, 4}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.sum(v[0]); },
                      {random_tensor({6}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.mean(v[0]); },
                      {random_tensor({3, 3}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.reshape(v[0], {6}); },
                      {random_tensor({2, 3}, rng)});
    check_op_gradient([](Graph& g, std::vector<VarId> v) { return g.weight_norm(v[0], v[1]); },
                      {random_tensor({3, 4}, rng, 0.5, 2.0), random_tensor({3}, rng, 0.5, 2.0)});
  }
}

TEST_CASE("backward reaches each node once and keeps frozen-leaf gradients") {
  Graph g;
  VarId x = g.param("x", Tensor::scalar(2.0), true);
  VarId w = g.param("w", Tensor::scalar(5.0), false);  // non-trainable leaf
  VarId shared = g.mul(x, w);
  VarId loss = g.add(shared, shared);  // diamond: shared feeds the sum twice
  g.backward(loss);
  CHECK(g.grad(x)[0] == doctest::Approx(10.0).epsilon(1e-12));
  // gradient retained for the frozen leaf as well
  CHECK(g.grad(w)[0] == doctest::Approx(4.0).epsilon(1e-12));

  GradStore gs;
  g.accumulate_leaf_grads(gs);
  CHECK(gs.find("x") != nullptr);
  CHECK(gs.find("w") != nullptr);
}
