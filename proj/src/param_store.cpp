#include "ctxgen/param_store.hpp"

#include <cmath>

namespace ctxgen {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (has(name)) throw ShapeError("duplicate parameter '" + name + "'");
  Entry entry;
  entry.name = name;
  entry.grad = Tensor::zeros(init.shape);
  entry.value = std::move(init);
  entries_.push_back(std::move(entry));
  index_[name] = entries_.size() - 1;
  return entries_.back().value;
}

bool ParamStore::has(const std::string& name) const {
  return index_.count(name) != 0;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ShapeError("unknown parameter '" + name + "'");
  }
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) {
  return entries_[index_of(name)].value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  return entries_[index_of(name)].value;
}

Tensor& ParamStore::grad(const std::string& name) {
  return entries_[index_of(name)].grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  return entries_[index_of(name)].grad;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.grad.fill(0.0);
}

void ParamStore::scale_grads(double s) {
  for (Entry& e : entries_) scale(e.grad, s);
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const Entry& e : entries_) {
    for (double g : e.grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

double clip_global_norm(ParamStore& params, double threshold) {
  if (!(threshold > 0.0)) {
    throw ShapeError("clip_global_norm: threshold must be > 0");
  }
  for (const auto& e : params.entries()) {
    if (!all_finite(e.grad)) {
      throw NumericError("non-finite gradient in '" + e.name + "'");
    }
  }
  const double norm = params.grad_norm();
  if (norm <= threshold) return 1.0;
  const double factor = threshold / norm;
  params.scale_grads(factor);
  return factor;
}

}  // namespace ctxgen
