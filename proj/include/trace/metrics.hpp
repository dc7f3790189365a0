#ifndef TRACE_METRICS_HPP
#define TRACE_METRICS_HPP

#include <cstddef>
#include <vector>

#include "trace/dataset.hpp"
#include "trace/model.hpp"

namespace trace {

/// Macro-averaged classification metrics over the two classes. A class with a
/// zero denominator contributes 0 to its precision/recall/F1.
struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;  // class 1 = positive
  double threshold = 0.5;
};

/// Metrics from already-thresholded predictions.
Metrics metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                 double threshold = 0.5);

/// Deterministic full-dataset evaluation (eval-mode forward, argmax
/// selection). Predicted label is p_hat >= threshold.
Metrics evaluate(const TraceModel& model, const Dataset& ds, double threshold = 0.5);

/// Fraction of label-1 examples whose eval-selected caption equals the hidden
/// signal caption. Requires a dataset that carries signal indices.
double selection_accuracy(const TraceModel& model, const Dataset& ds);

struct McNemarResult {
  std::size_t n10 = 0;  // model 1 right, model 2 wrong
  std::size_t n01 = 0;  // model 1 wrong, model 2 right
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Continuity-corrected McNemar statistic
/// (max(|n10 - n01| - 1, 0))^2 / (n10 + n01), with the p-value from the
/// chi-square(1) survival function erfc(sqrt(stat / 2)).
McNemarResult mcnemar(std::size_t n10, std::size_t n01);

}  // namespace trace

#endif
