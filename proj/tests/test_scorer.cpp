#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "trace/gradcheck.hpp"
#include "trace/scorer.hpp"
#include "trace/train.hpp"

using namespace trace;

TEST_CASE("apply_weight_norm examples") {
  SUBCASE("gain equal to the row norm reproduces v") {
    Tensor v = Tensor::matrix(2, 3, {1, 2, 2, -4, 4, 2});
    Tensor g({2});
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += v.at(r, c) * v.at(r, c);
      g[r] = std::sqrt(s);
    }
    Tensor w = apply_weight_norm(v, g);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(w[i] == doctest::Approx(v[i]).epsilon(1e-14));
  }
  SUBCASE("direction invariance under positive scaling") {
    Tensor v = Tensor::matrix(2, 2, {3, 4, -1, 2});
    Tensor vc = v;
    for (double& x : vc.values()) x *= 7.5;
    Tensor g = Tensor::vec({2.0, 0.5});
    Tensor w1 = apply_weight_norm(v, g);
    Tensor w2 = apply_weight_norm(vc, g);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-12));
  }
  SUBCASE("row (3,4) with gain 10 becomes (6,8)") {
    Tensor w = apply_weight_norm(Tensor::matrix(1, 2, {3, 4}), Tensor::vec({10.0}));
    CHECK(w[0] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(8.0).epsilon(1e-14));
    // row norm equals the gain
    CHECK(std::hypot(w[0], w[1]) == doctest::Approx(10.0).epsilon(1e-10));
  }
  SUBCASE("zero-norm row raises a singularity error naming the row") {
    Tensor v = Tensor::matrix(2, 2, {1, 1, 0, 0});
    CHECK_THROWS_WITH_AS(apply_weight_norm(v, Tensor::vec({1.0, 1.0})),
                         doctest::Contains("row 1"), std::invalid_argument);
  }
}

TEST_CASE("init_scorer determinism and shapes") {
  ScorerConfig cfg;
  cfg.d = 8;
  cfg.h1 = 4;
  cfg.h2 = 2;
  ParamStore a, b, c;
  init_scorer(a, cfg, 42);
  init_scorer(b, cfg, 42);
  init_scorer(c, cfg, 43);

  CHECK(a.value("scorer.w1").shape() == std::vector<std::size_t>{8, 4});
  CHECK(a.value("scorer.w5").shape() == std::vector<std::size_t>{2, 1});
  CHECK(a.value("scorer.w4.v").shape() == std::vector<std::size_t>{4, 2});

  bool identical = true, differs = false;
  for (const auto& e : a.entries()) {
    const Tensor& other = b.value(e.name);
    for (std::size_t i = 0; i < e.value.size(); ++i) identical &= e.value[i] == other[i];
    const Tensor& third = c.value(e.name);
    for (std::size_t i = 0; i < e.value.size(); ++i) differs |= e.value[i] != third[i];
  }
  CHECK(identical);
  CHECK(differs);

  // initial effective weight equals v: gains hold the row norms
  Tensor w2 = apply_weight_norm(a.value("scorer.w2.v"), a.value("scorer.w2.g"));
  for (std::size_t i = 0; i < w2.size(); ++i)
    CHECK(w2[i] == doctest::Approx(a.value("scorer.w2.v")[i]).epsilon(1e-12));
}

TEST_CASE("score contracts") {
  ScorerConfig cfg;
  cfg.d = 2;
  cfg.h1 = 2;
  cfg.h2 = 2;
  cfg.dropout_p = 0.0;

  SUBCASE("all parameters zero give score zero") {
    ParamStore store;
    init_scorer(store, cfg, 1);
    for (auto& e : store.entries()) e.value.fill(0.0);
    // zero v rows would be singular; weight norm needs a direction
    store.value("scorer.w2.v").fill(0.5);
    store.value("scorer.w3.v").fill(0.5);
    store.value("scorer.w4.v").fill(0.5);
    RngStream rng(0);
    CHECK(score(store, cfg, Tensor::vec({1.0, -2.0}), RunMode::eval, rng) == 0.0);
  }

  SUBCASE("matches an independent straight-line oracle") {
    ParamStore store;
    init_scorer(store, cfg, 5);
    RngStream rng(0);
    Tensor h = Tensor::vec({0.7, -1.2});
    double got = score(store, cfg, h, RunMode::eval, rng);

    // straight-line recomputation with plain loops
    auto linear_row = [&](const std::vector<double>& x, const Tensor& w,
                          const Tensor& b) {
      std::vector<double> out(w.cols(), 0.0);
      for (std::size_t j = 0; j < w.cols(); ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w.at(i, j);
        out[j] += b[j];
      }
      return out;
    };
    auto phi = [&](std::vector<double> z, const Tensor& gamma, const Tensor& beta) {
      double mu = 0;
      for (double v : z) mu += v;
      mu /= z.size();
      double var = 0;
      for (double v : z) var += (v - mu) * (v - mu);
      var /= z.size();
      for (std::size_t i = 0; i < z.size(); ++i) {
        double xhat = (z[i] - mu) / std::sqrt(var + 1e-5);
        double a = gamma[i] * xhat + beta[i];
        z[i] = 0.5 * a * (1.0 + std::erf(a / std::sqrt(2.0)));
      }
      return z;
    };
    auto normed = [&](const char* v, const char* gn) {
      Tensor w = store.value(v);
      const Tensor& g = store.value(gn);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double n2 = 0;
        for (std::size_t c = 0; c < w.cols(); ++c) n2 += w.at(r, c) * w.at(r, c);
        double s = g[r] / std::sqrt(n2);
        for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) *= s;
      }
      return w;
    };
    std::vector<double> x = {0.7, -1.2};
    x = phi(linear_row(x, store.value("scorer.w1"), store.value("scorer.b1")),
            store.value("scorer.ln1.gamma"), store.value("scorer.ln1.beta"));
    x = phi(linear_row(x, normed("scorer.w2.v", "scorer.w2.g"), store.value("scorer.b2")),
            store.value("scorer.ln2.gamma"), store.value("scorer.ln2.beta"));
    x = phi(linear_row(x, normed("scorer.w3.v", "scorer.w3.g"), store.value("scorer.b3")),
            store.value("scorer.ln3.gamma"), store.value("scorer.ln3.beta"));
    x = phi(linear_row(x, normed("scorer.w4.v", "scorer.w4.g"), store.value("scorer.b4")),
            store.value("scorer.ln4.gamma"), store.value("scorer.ln4.beta"));
    x = linear_row(x, store.value("scorer.w5"), store.value("scorer.b5"));
    CHECK(got == doctest::Approx(x[0]).epsilon(1e-12));
  }

  SUBCASE("train mode with p=0 equals eval mode exactly") {
    ScorerConfig cfg2 = cfg;
    cfg2.dropout_p = 0.0;
    ParamStore store;
    init_scorer(store, cfg2, 9);
    RngStream r1(3), r2(4);
    Tensor h = Tensor::vec({0.25, 0.5});
    CHECK(score(store, cfg2, h, RunMode::train, r1) == score(store, cfg2, h, RunMode::eval, r2));
  }

  SUBCASE("dimension mismatch is rejected") {
    ParamStore store;
    init_scorer(store, cfg, 2);
    RngStream rng(0);
    CHECK_THROWS_AS(score(store, cfg, Tensor::vec({1.0, 2.0, 3.0}), RunMode::eval, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("score is exactly linear in the final layer scale") {
  ScorerConfig cfg;
  cfg.d = 4;
  cfg.h1 = 6;
  cfg.h2 = 3;
  cfg.dropout_p = 0.0;
  ParamStore store;
  init_scorer(store, cfg, 17);
  RngStream rng(0);
  Tensor h = Tensor::vec({0.1, -0.4, 0.9, 0.3});
  double base = score(store, cfg, h, RunMode::eval, rng);
  // scale W5 and b5 by a power of two so the comparison can be exact
  for (double& v : store.value("scorer.w5").values()) v *= 4.0;
  for (double& v : store.value("scorer.b5").values()) v *= 4.0;
  CHECK(score(store, cfg, h, RunMode::eval, rng) == 4.0 * base);
}

TEST_CASE("weight-normalized rows keep their gains through optimizer steps") {
  ScorerConfig cfg;
  cfg.d = 3;
  cfg.h1 = 4;
  cfg.h2 = 2;
  cfg.dropout_p = 0.0;
  ParamStore store;
  init_scorer(store, cfg, 23);

  Adam opt(0.05);
  RngStream rng(0);
  Tensor h = Tensor::vec({1.0, 0.5, -0.25});
  for (int step = 0; step < 25; ++step) {
    Graph g;
    ScorerLeaves leaves = scorer_leaves(g, store);
    VarId s = scorer_score(g, leaves, cfg, g.input(h), RunMode::eval, rng);
    VarId loss = g.mul(s, s);
    g.backward(loss);
    GradStore grads;
    g.accumulate_leaf_grads(grads);
    opt.step(store, grads);
  }
  for (const char* layer : {"2", "3", "4"}) {
    Tensor w = apply_weight_norm(store.value("scorer.w" + std::string(layer) + ".v"),
                                 store.value("scorer.w" + std::string(layer) + ".g"));
    const Tensor& gains = store.value("scorer.w" + std::string(layer) + ".g");
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double n2 = 0;
      for (std::size_t c = 0; c < w.cols(); ++c) n2 += w.at(r, c) * w.at(r, c);
      CHECK(std::sqrt(n2) == doctest::Approx(std::fabs(gains[r])).epsilon(1e-10));
    }
  }
}

TEST_CASE("score gradient passes the finite-difference check") {
  ScorerConfig cfg;
  cfg.d = 3;
  cfg.h1 = 4;
  cfg.h2 = 2;
  cfg.dropout_p = 0.0;
  ParamStore store;
  init_scorer(store, cfg, 31);
  Tensor h = Tensor::vec({0.8, -0.3, 0.45});

  LossFn fn = [&](const ParamStore& p, GradStore* gs) {
    Graph g;
    ScorerLeaves leaves = scorer_leaves(g, p);
    RngStream rng(0);
    VarId s = scorer_score(g, leaves, cfg, g.input(h), RunMode::eval, rng);
    VarId loss = g.mul(s, s);  // curvature so the check is non-trivial
    if (gs) {
      g.backward(loss);
      g.accumulate_leaf_grads(*gs);
    }
    return g.scalar(loss);
  };
  GradCheckReport report = check_gradient(fn, store);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("joint scoring of K captions equals K independent computations bit-exactly") {
  ScorerConfig cfg;
  cfg.d = 4;
  cfg.h1 = 5;
  cfg.h2 = 3;
  cfg.dropout_p = 0.0;
  ParamStore store;
  init_scorer(store, cfg, 77);

  std::vector<Tensor> captions = {Tensor::vec({1, 0, -1, 0.5}), Tensor::vec({0.2, 0.4, 0.6, 0.8}),
                                  Tensor::vec({-2, 1, 0, 0.1})};

  // joint: one graph, shared leaves
  Graph g;
  ScorerLeaves leaves = scorer_leaves(g, store);
  RngStream rng(0);
  std::vector<double> joint;
  for (const Tensor& h : captions)
    joint.push_back(g.scalar(scorer_score(g, leaves, cfg, g.input(h), RunMode::eval, rng)));

  for (std::size_t i = 0; i < captions.size(); ++i) {
    RngStream r2(0);
    CHECK(joint[i] == score(store, cfg, captions[i], RunMode::eval, r2));
  }
}
