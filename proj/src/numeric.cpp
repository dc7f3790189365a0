#include "trace/numeric.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trace {

void stable_softmax(const double* x, double* y, std::size_t n) {
  if (n == 0) throw std::invalid_argument("softmax: empty row");
  double m = x[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - m);
    z += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= z;
}

void stable_softmax_masked(const double* x, const std::uint8_t* allow, double* y, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (allow[j]) m = std::max(m, x[j]);
  if (m == -std::numeric_limits<double>::infinity())
    throw std::invalid_argument("softmax: row with no allowed columns");
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = allow[j] ? std::exp(x[j] - m) : 0.0;
    z += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= z;
}

std::size_t argmax_index(const double* x, std::size_t n) {
  if (n == 0) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (x[j] > x[best]) best = j;
  return best;
}

}  // namespace trace
