#ifndef TRACE_NUMERIC_HPP
#define TRACE_NUMERIC_HPP

#include <cstddef>
#include <cstdint>

namespace trace {

/// Max-shifted softmax over one row of n values. The graph op and the
/// selector's distribution math both route through here.
void stable_softmax(const double* x, double* y, std::size_t n);

/// Softmax restricted to columns with allow[j] != 0; disallowed outputs are 0.
/// At least one column must be allowed.
void stable_softmax_masked(const double* x, const std::uint8_t* allow, double* y, std::size_t n);

/// Index of the strictly largest value; ties resolve to the lowest index.
std::size_t argmax_index(const double* x, std::size_t n);

}  // namespace trace

#endif
