#include "trace/selector.hpp"

#include <cmath>
#include <stdexcept>

#include "trace/numeric.hpp"

namespace trace {

std::vector<double> sample_gumbel(std::size_t count, RngStream& rng) {
  if (count == 0) throw std::invalid_argument("sample_gumbel: count must be >= 1");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    double u = rng.uniform();
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    g[i] = -std::log(-std::log(u));
  }
  return g;
}

std::vector<double> gumbel_softmax(const std::vector<double>& scores,
                                   const std::vector<double>& noise, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (noise.size() != scores.size())
    throw std::invalid_argument("gumbel_softmax: noise length does not match scores");
  std::vector<double> shifted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) shifted[i] = (scores[i] + noise[i]) / tau;
  std::vector<double> probs(scores.size());
  stable_softmax(shifted.data(), probs.data(), shifted.size());
  return probs;
}

Tensor select_features(const Tensor& features, const std::vector<double>& probs,
                       SelectionMode mode) {
  if (features.rank() != 2 || features.rows() != probs.size())
    throw std::invalid_argument("select_features: probs do not match feature rows");
  std::size_t cols = features.cols();
  Tensor out({cols});
  if (mode == SelectionMode::hard_st) {
    std::size_t idx = argmax_index(probs.data(), probs.size());
    for (std::size_t c = 0; c < cols; ++c) out[c] = features.at(idx, c);
    return out;
  }
  for (std::size_t r = 0; r < probs.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += probs[r] * features.at(r, c);
  return out;
}

SelectionResult eval_select(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("eval_select: need at least one score");
  SelectionResult r;
  r.scores = scores;
  r.raw_probs.resize(scores.size());
  stable_softmax(scores.data(), r.raw_probs.data(), scores.size());
  std::size_t idx = argmax_index(scores.data(), scores.size());
  r.gumbel_probs.assign(scores.size(), 0.0);
  r.gumbel_probs[idx] = 1.0;
  r.selected_index = idx + 1;
  r.temperature = 1.0;
  return r;
}

SelectionResult train_select(const std::vector<double>& scores, const std::vector<double>& noise,
                             double tau) {
  SelectionResult r;
  r.scores = scores;
  r.raw_probs.resize(scores.size());
  stable_softmax(scores.data(), r.raw_probs.data(), scores.size());
  r.gumbel_probs = gumbel_softmax(scores, noise, tau);
  r.selected_index = argmax_index(r.gumbel_probs.data(), r.gumbel_probs.size()) + 1;
  r.temperature = tau;
  return r;
}

}  // namespace trace
