#include "trace/init.hpp"

#include <cmath>

namespace trace {

Tensor xavier_uniform(std::size_t rows, std::size_t cols, RngStream& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, RngStream& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace trace
