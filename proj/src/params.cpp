#include "trace/params.hpp"

#include <stdexcept>

namespace trace {

void ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(value), trainable});
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second];
}

Tensor& ParamStore::value(const std::string& name) {
  return const_cast<ParamEntry&>(entry(name)).value;
}

const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

bool ParamStore::trainable(const std::string& name) const { return entry(name).trainable; }

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  const_cast<ParamEntry&>(entry(name)).trainable = trainable;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::size_t ParamStore::trainable_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

void GradStore::accumulate(const std::string& name, const Tensor& grad) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_.emplace(name, grad);
    return;
  }
  require_same_shape(it->second, grad, "GradStore::accumulate");
  double* dst = it->second.data();
  const double* src = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

const Tensor* GradStore::find(const std::string& name) const {
  auto it = grads_.find(name);
  return it == grads_.end() ? nullptr : &it->second;
}

void GradStore::scale(double s) {
  for (auto& [name, g] : grads_) {
    (void)name;
    for (double& v : g.values()) v *= s;
  }
}

}  // namespace trace
