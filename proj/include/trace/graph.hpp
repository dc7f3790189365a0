#ifndef TRACE_GRAPH_HPP
#define TRACE_GRAPH_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trace/params.hpp"
#include "trace/rng.hpp"
#include "trace/tensor.hpp"

namespace trace {

enum class RunMode { train, eval };

using VarId = int;

enum class OpKind : std::uint8_t {
  leaf,
  add,
  mul,
  affine,
  matmul,
  bias_add,
  gelu,
  sigmoid,
  log,
  clamp,
  layer_norm,
  softmax,
  dropout,
  masked_mean_rows,
  gather_rows,
  concat,
  slice_cols,
  transpose,
  sum,
  mean,
  reshape,
  weight_norm,
  select_st,
};

/// One tape record: op kind, input refs, forward value, and the gradient
/// accumulated during backward.
struct Node {
  OpKind kind = OpKind::leaf;
  std::array<VarId, 3> in{-1, -1, -1};
  Tensor value;
  Tensor grad;
  bool has_grad = false;

  double p0 = 0.0, p1 = 0.0;       // op scalars (affine a/b, clamp lo/hi, dropout scale, eps)
  std::size_t s0 = 0, s1 = 0;      // op extents (slice start/width, selected index)
  std::vector<std::uint8_t> mask;  // dropout keep mask / softmax column mask / pooling row mask
  std::vector<std::size_t> ids;    // gather row indices

  std::string name;  // leaves only
  bool trainable = false;
};

/// Eager tape for reverse-mode differentiation. Ops compute their value when
/// recorded; backward() walks the tape once in reverse from the loss and
/// accumulates gradients into every reachable node, leaves included.
/// Single-writer: one graph instance must not be mutated from two threads.
class Graph {
 public:
  // Leaves. param() copies the tensor so later optimizer steps cannot
  // invalidate a recorded forward pass.
  VarId param(const std::string& name, const Tensor& value, bool trainable);
  VarId param(const ParamStore& store, const std::string& name);
  VarId input(Tensor value);

  VarId add(VarId a, VarId b);
  VarId mul(VarId a, VarId b);
  VarId affine(VarId x, double scale, double shift);
  VarId matmul(VarId a, VarId b);
  VarId bias_add(VarId x, VarId b);
  VarId gelu(VarId x);
  VarId sigmoid(VarId x);
  VarId log(VarId x);
  VarId clamp(VarId x, double lo, double hi);
  VarId layer_norm(VarId x, VarId gamma, VarId beta, double eps = 1e-5);
  VarId softmax(VarId x);
  VarId softmax_masked(VarId x, const std::vector<std::uint8_t>& col_mask);
  VarId dropout(VarId x, double p, RunMode mode, RngStream& rng);
  VarId masked_mean_rows(VarId x, const std::vector<std::uint8_t>& row_mask);
  VarId gather_rows(VarId table, const std::vector<std::size_t>& rows);
  VarId concat(VarId a, VarId b);
  VarId slice_cols(VarId x, std::size_t start, std::size_t width);
  VarId transpose(VarId x);
  VarId sum(VarId x);
  VarId mean(VarId x);
  VarId reshape(VarId x, std::vector<std::size_t> shape);
  VarId weight_norm(VarId v, VarId g);
  VarId select_st(VarId features, VarId probs);

  /// x*W + b, row-vector convention. Rank-1 x of length d is treated as 1 x d
  /// and the result is returned as rank-1 of length cols(W).
  VarId linear(VarId x, VarId w, VarId b);

  const Tensor& value(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(VarId id) const;
  double scalar(VarId id) const;

  void backward(VarId loss);

  /// Adds every leaf gradient (trainable or not) into `out` keyed by name.
  void accumulate_leaf_grads(GradStore& out) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  Node& at(VarId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(VarId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  VarId push(Node n);
  Tensor& grad_buf(VarId id);
  void backward_node(std::size_t i, std::vector<std::uint8_t>& reachable);

  std::vector<Node> nodes_;
};

}  // namespace trace

#endif
