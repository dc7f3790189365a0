#ifndef TRACE_INIT_HPP
#define TRACE_INIT_HPP

#include <cstddef>

#include "trace/rng.hpp"
#include "trace/tensor.hpp"

namespace trace {

/// rows x cols matrix with entries uniform in (-limit, limit),
/// limit = sqrt(6 / (fan_in + fan_out)) under the row-vector convention
/// (fan_in = rows, fan_out = cols).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, RngStream& rng);

/// Tensor with entries uniform in (-bound, bound).
Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, RngStream& rng);

}  // namespace trace

#endif
