#ifndef TRACE_SCORER_HPP
#define TRACE_SCORER_HPP

#include <cstdint>
#include <string>

#include "trace/graph.hpp"
#include "trace/params.hpp"

namespace trace {

/// Caption scorer: five linear layers with LayerNorm -> GELU -> Dropout after
/// each of the first four. Layers 2-4 are weight-normalized (direction v plus
/// per-output-row gain g); layers 1 and 5 use raw matrices.
struct ScorerConfig {
  std::size_t d = 64;     // input feature width (matches the text encoder)
  std::size_t h1 = 1024;  // hidden width of layers 1-3
  std::size_t h2 = 512;   // hidden width of layer 4
  double dropout_p = 0.2;

  void validate() const;
};

/// W = (g_i / ||v_i||) * v_i per row. Throws on a zero-norm row, naming it.
Tensor apply_weight_norm(const Tensor& v, const Tensor& g);

/// Registers scorer parameters under `prefix`. Weights are Xavier-uniform;
/// v matrices are initialized like weights with g set to the row norms, so the
/// initial effective matrix equals v. Biases zero; LayerNorm affine (1, 0).
void init_scorer(ParamStore& store, const ScorerConfig& cfg, std::uint64_t seed,
                 const std::string& prefix = "scorer.");

/// Graph leaves for one forward pass. The weight-normalized layers are
/// recorded once so K captions share them.
struct ScorerLeaves {
  VarId w1, b1;
  VarId w2, b2;  // effective (weight-normalized) matrices
  VarId w3, b3;
  VarId w4, b4;
  VarId w5, b5;
  VarId ln_gamma[4], ln_beta[4];
};

ScorerLeaves scorer_leaves(Graph& g, const ParamStore& store,
                           const std::string& prefix = "scorer.");

/// Scalar score of one caption feature (rank-1, length d). Returns a VarId
/// whose value is a single element.
VarId scorer_score(Graph& g, const ScorerLeaves& leaves, const ScorerConfig& cfg, VarId h,
                   RunMode mode, RngStream& dropout_rng);

/// Value-level convenience used by tests and tools.
double score(const ParamStore& store, const ScorerConfig& cfg, const Tensor& h, RunMode mode,
             RngStream& dropout_rng, const std::string& prefix = "scorer.");

}  // namespace trace

#endif
