#ifndef TRACE_SELECTOR_HPP
#define TRACE_SELECTOR_HPP

#include <cstddef>
#include <vector>

#include "trace/rng.hpp"
#include "trace/tensor.hpp"

namespace trace {

enum class SelectionMode { soft, hard_st };

/// Per-example caption selection record. raw_probs is the noise-free softmax
/// of the scores at temperature 1; gumbel_probs is the training distribution,
/// or an exact one-hot when produced by eval_select.
struct SelectionResult {
  std::vector<double> scores;
  std::vector<double> raw_probs;
  std::vector<double> gumbel_probs;
  std::size_t selected_index = 1;  // 1-based
  double temperature = 1.0;
};

/// K draws of -log(-log(u)), u uniform clamped to [1e-12, 1 - 1e-12].
std::vector<double> sample_gumbel(std::size_t count, RngStream& rng);

/// softmax((scores + noise) / tau). tau must be positive.
std::vector<double> gumbel_softmax(const std::vector<double>& scores,
                                   const std::vector<double>& noise, double tau);

/// soft: convex combination of rows. hard_st: the argmax row (the
/// differentiable straight-through path lives in Graph::select_st).
Tensor select_features(const Tensor& features, const std::vector<double>& probs,
                       SelectionMode mode);

/// Deterministic inference-time selection: no noise, one-hot at the argmax of
/// the scores, ties broken toward the lowest index.
SelectionResult eval_select(const std::vector<double>& scores);

/// Training-time record for a distribution produced by gumbel_softmax.
SelectionResult train_select(const std::vector<double>& scores, const std::vector<double>& noise,
                             double tau);

}  // namespace trace

#endif
