#ifndef TRACE_MODEL_HPP
#define TRACE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "trace/dataset.hpp"
#include "trace/encoder.hpp"
#include "trace/fusion.hpp"
#include "trace/gradcheck.hpp"
#include "trace/scorer.hpp"
#include "trace/selector.hpp"

namespace trace {

struct ModelConfig {
  EncoderConfig encoder;
  ScorerConfig scorer;
  FusionConfig fusion;
  double tau = 1.0;
  SelectionMode selection = SelectionMode::soft;
  double threshold = 0.5;

  /// Ties the pieces together: scorer.d and fusion.d_txt follow the encoder
  /// width; fusion.d_img follows the dataset.
  void link(std::size_t d_img);
  void validate() const;
};

/// The assembled classifier: one parameter store holding encoder, scorer, and
/// fusion tensors.
struct TraceModel {
  ModelConfig config;
  ParamStore params;

  static TraceModel init(const ModelConfig& cfg, std::uint64_t seed);

  /// Freezes all but the last n encoder blocks (embeddings stay frozen, the
  /// final LayerNorm stays trainable).
  void set_trainable_layers(std::size_t n);
};

struct TrainForward {
  VarId loss_total, loss_cls, loss_rel;
  VarId p_hat;
  SelectionResult selection;
};

/// Records one training-mode forward pass (dropout active, Gumbel noise,
/// soft or straight-through selection) for a single example.
TrainForward model_forward_train(Graph& g, const TraceModel& model, const Example& ex,
                                 RngStream& dropout_rng, RngStream& gumbel_rng);

struct EvalForward {
  double p_hat = 0.0;
  int predicted = 0;
  SelectionResult selection;
};

/// Deterministic inference: no dropout, no noise, argmax selection.
EvalForward model_forward_eval(const TraceModel& model, const Example& ex);

/// Finite-difference check of the full loss gradient (mean of per-example
/// L_total over the batch). Dropout is forced off and the Gumbel noise is
/// replayed from noise_seed on every evaluation, so the loss is a
/// deterministic function of the parameters.
GradCheckReport model_gradient_check(const TraceModel& model, const std::vector<Example>& batch,
                                     std::uint64_t noise_seed, double fd_step = 1e-5);

}  // namespace trace

#endif
