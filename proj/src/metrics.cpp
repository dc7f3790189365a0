#include "trace/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace trace {

Metrics metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                 double threshold) {
  if (labels.size() != preds.size())
    throw std::invalid_argument("metrics: labels and predictions differ in length");
  if (labels.empty()) throw std::invalid_argument("metrics: empty input");

  Metrics m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      preds[i] == 1 ? ++m.tp : ++m.fn;
    } else {
      preds[i] == 1 ? ++m.fp : ++m.tn;
    }
  }
  auto safe_div = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  auto f1 = [&](double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };

  double p1 = safe_div(m.tp, m.tp + m.fp);
  double r1 = safe_div(m.tp, m.tp + m.fn);
  double p0 = safe_div(m.tn, m.tn + m.fn);
  double r0 = safe_div(m.tn, m.tn + m.fp);

  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
  m.macro_precision = 0.5 * (p1 + p0);
  m.macro_recall = 0.5 * (r1 + r0);
  m.macro_f1 = 0.5 * (f1(p1, r1) + f1(p0, r0));
  return m;
}

Metrics evaluate(const TraceModel& model, const Dataset& ds, double threshold) {
  if (ds.examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (ds.d_img != model.config.fusion.d_img)
    throw std::invalid_argument("evaluate: dataset d_img " + std::to_string(ds.d_img) +
                                " does not match model d_img " +
                                std::to_string(model.config.fusion.d_img));
  std::vector<int> labels, preds;
  labels.reserve(ds.examples.size());
  preds.reserve(ds.examples.size());
  for (const Example& ex : ds.examples) {
    EvalForward out = model_forward_eval(model, ex);
    labels.push_back(ex.label);
    preds.push_back(out.p_hat >= threshold ? 1 : 0);
  }
  return metrics_from_predictions(labels, preds, threshold);
}

double selection_accuracy(const TraceModel& model, const Dataset& ds) {
  std::size_t positives = 0, hits = 0;
  for (const Example& ex : ds.examples) {
    if (ex.label != 1) continue;
    if (ex.signal_index <= 0)
      throw std::invalid_argument("selection_accuracy: dataset lacks ground-truth signal indices");
    ++positives;
    EvalForward out = model_forward_eval(model, ex);
    if (static_cast<int>(out.selection.selected_index) == ex.signal_index) ++hits;
  }
  if (positives == 0)
    throw std::invalid_argument("selection_accuracy: dataset has no label-1 examples");
  return static_cast<double>(hits) / static_cast<double>(positives);
}

McNemarResult mcnemar(std::size_t n10, std::size_t n01) {
  if (n10 + n01 == 0)
    throw std::invalid_argument("mcnemar: undefined test, both disagreement counts are zero");
  McNemarResult r;
  r.n10 = n10;
  r.n01 = n01;
  double diff = std::fabs(static_cast<double>(n10) - static_cast<double>(n01));
  double corrected = std::max(diff - 1.0, 0.0);
  r.statistic = corrected * corrected / static_cast<double>(n10 + n01);
  r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  return r;
}

}  // namespace trace
