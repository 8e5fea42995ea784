#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxgen/tensor.hpp"

namespace ctxgen {

// Named parameter tensors, each paired with a gradient buffer of identical
// shape. Insertion order is the canonical order for initialization draws,
// serialization, and norm reductions, so it must stay stable across runs.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const;

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  void scale_grads(double s);
  // Global L2 norm over all gradient buffers.
  double grad_norm() const;
  std::size_t parameter_count() const;

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Scales all gradients by threshold/norm when the global L2 norm exceeds
// the threshold. Returns the factor applied (1 when no clipping happened).
double clip_global_norm(ParamStore& params, double threshold);

}  // namespace ctxgen
