#ifndef TRACE_PARAMS_HPP
#define TRACE_PARAMS_HPP

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "trace/tensor.hpp"

namespace trace {

struct ParamEntry {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named parameter tensors in a stable insertion order. Insertion order drives
/// optimizer state layout, checkpoint layout, and gradient-check traversal, so
/// two models built the same way iterate identically.
class ParamStore {
 public:
  void add(std::string name, Tensor value, bool trainable = true);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }

  std::size_t total_scalars() const;
  std::size_t trainable_scalars() const;

 private:
  const ParamEntry& entry(const std::string& name) const;
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient accumulator keyed by parameter name.
class GradStore {
 public:
  void accumulate(const std::string& name, const Tensor& grad);
  const Tensor* find(const std::string& name) const;
  void scale(double s);
  void clear() { grads_.clear(); }
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<std::string, Tensor> grads_;
};

}  // namespace trace

#endif
