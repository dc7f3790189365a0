#ifndef TRACE_EXPLAIN_HPP
#define TRACE_EXPLAIN_HPP

#include <string>
#include <vector>

#include "trace/model.hpp"

namespace trace {

struct CaptionReport {
  std::size_t index = 1;  // 1-based
  std::string text;
  double score = 0.0;
  double raw_prob = 0.0;
  double gumbel_prob = 0.0;
};

/// Deterministic per-example explanation: every caption's score and
/// probabilities, the selected caption, and the prediction.
struct Explanation {
  std::string id;
  double predicted_probability = 0.0;
  int predicted_label = 0;
  double threshold = 0.5;
  std::size_t selected_index = 1;
  std::vector<CaptionReport> captions;
};

Explanation explain(const TraceModel& model, const Example& ex);

/// Lossless JSON round-trip.
std::string explanation_to_json(const Explanation& e);
Explanation explanation_from_json(const std::string& text);

/// Human-readable rendering: a prediction line, one "Score | Raw Prob |
/// Gumbel Prob" line per caption, then "Selected Caption Index: k".
std::string render_text(const Explanation& e);

}  // namespace trace

#endif
