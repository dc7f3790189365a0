#include "trace/scorer.hpp"

#include <cmath>
#include <stdexcept>

#include "trace/init.hpp"

namespace trace {

void ScorerConfig::validate() const {
  if (d == 0 || h1 == 0 || h2 == 0) throw std::invalid_argument("scorer dims must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("scorer dropout rate must be in [0, 1)");
}

Tensor apply_weight_norm(const Tensor& v, const Tensor& g) {
  Graph graph;
  return graph.value(graph.weight_norm(graph.input(v), graph.input(g)));
}

namespace {
Tensor row_norms(const Tensor& v) {
  Tensor g({v.rows()});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) s += v.at(r, c) * v.at(r, c);
    g[r] = std::sqrt(s);
  }
  return g;
}

void add_norm_layer(ParamStore& store, const std::string& prefix, int idx, std::size_t rows,
                    std::size_t cols, RngStream& rng) {
  Tensor v = xavier_uniform(rows, cols, rng);
  store.add(prefix + "w" + std::to_string(idx) + ".v", v);
  store.add(prefix + "w" + std::to_string(idx) + ".g", row_norms(v));
  store.add(prefix + "b" + std::to_string(idx), Tensor({cols}));
}

void add_ln(ParamStore& store, const std::string& name, std::size_t width) {
  Tensor gamma({width});
  gamma.fill(1.0);
  store.add(name + ".gamma", std::move(gamma));
  store.add(name + ".beta", Tensor({width}));
}
}  // namespace

void init_scorer(ParamStore& store, const ScorerConfig& cfg, std::uint64_t seed,
                 const std::string& prefix) {
  cfg.validate();
  RngStream rng(seed);
  store.add(prefix + "w1", xavier_uniform(cfg.d, cfg.h1, rng));
  store.add(prefix + "b1", Tensor({cfg.h1}));
  add_ln(store, prefix + "ln1", cfg.h1);
  add_norm_layer(store, prefix, 2, cfg.h1, cfg.h1, rng);
  add_ln(store, prefix + "ln2", cfg.h1);
  add_norm_layer(store, prefix, 3, cfg.h1, cfg.h1, rng);
  add_ln(store, prefix + "ln3", cfg.h1);
  add_norm_layer(store, prefix, 4, cfg.h1, cfg.h2, rng);
  add_ln(store, prefix + "ln4", cfg.h2);
  store.add(prefix + "w5", xavier_uniform(cfg.h2, 1, rng));
  store.add(prefix + "b5", Tensor({1}));
}

ScorerLeaves scorer_leaves(Graph& g, const ParamStore& store, const std::string& prefix) {
  ScorerLeaves l;
  l.w1 = g.param(store, prefix + "w1");
  l.b1 = g.param(store, prefix + "b1");
  for (int i = 2; i <= 4; ++i) {
    VarId v = g.param(store, prefix + "w" + std::to_string(i) + ".v");
    VarId gain = g.param(store, prefix + "w" + std::to_string(i) + ".g");
    VarId eff = g.weight_norm(v, gain);
    VarId b = g.param(store, prefix + "b" + std::to_string(i));
    if (i == 2) { l.w2 = eff; l.b2 = b; }
    else if (i == 3) { l.w3 = eff; l.b3 = b; }
    else { l.w4 = eff; l.b4 = b; }
  }
  l.w5 = g.param(store, prefix + "w5");
  l.b5 = g.param(store, prefix + "b5");
  for (int i = 0; i < 4; ++i) {
    l.ln_gamma[i] = g.param(store, prefix + "ln" + std::to_string(i + 1) + ".gamma");
    l.ln_beta[i] = g.param(store, prefix + "ln" + std::to_string(i + 1) + ".beta");
  }
  return l;
}

VarId scorer_score(Graph& g, const ScorerLeaves& leaves, const ScorerConfig& cfg, VarId h,
                   RunMode mode, RngStream& dropout_rng) {
  if (g.value(h).size() != cfg.d)
    throw std::invalid_argument("scorer: feature length " +
                                std::to_string(g.value(h).size()) + " does not match d=" +
                                std::to_string(cfg.d));
  // phi(Wx) = Dropout(GELU(LayerNorm(Wx)))
  auto phi = [&](VarId z, int i) {
    VarId ln = g.layer_norm(z, leaves.ln_gamma[i], leaves.ln_beta[i]);
    return g.dropout(g.gelu(ln), cfg.dropout_p, mode, dropout_rng);
  };
  VarId a1 = phi(g.linear(h, leaves.w1, leaves.b1), 0);
  VarId a2 = phi(g.linear(a1, leaves.w2, leaves.b2), 1);
  VarId a3 = phi(g.linear(a2, leaves.w3, leaves.b3), 2);
  VarId a4 = phi(g.linear(a3, leaves.w4, leaves.b4), 3);
  return g.linear(a4, leaves.w5, leaves.b5);
}

double score(const ParamStore& store, const ScorerConfig& cfg, const Tensor& h, RunMode mode,
             RngStream& dropout_rng, const std::string& prefix) {
  Graph g;
  ScorerLeaves leaves = scorer_leaves(g, store, prefix);
  VarId s = scorer_score(g, leaves, cfg, g.input(h), mode, dropout_rng);
  return g.scalar(s);
}

}  // namespace trace
