#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "ctxgen/common.hpp"

namespace ctxgen {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything the
// models need; no broadcasting, no strides, no views. Ops either allocate a
// fresh result or accumulate into a caller-owned buffer.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor vec(std::initializer_list<double> values);
  static Tensor from_vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  void fill(double v);
  std::string shape_str() const;
};

bool all_finite(const Tensor& t);
// Throws NumericError naming `what` if t contains a NaN or Inf.
void require_finite(const Tensor& t, const char* what);

// y = W x
Tensor matvec(const Tensor& w, const Tensor& x);
// y = W^T x
Tensor matvec_transposed(const Tensor& w, const Tensor& x);
// y += W^T x
void add_matvec_transposed(const Tensor& w, const Tensor& x, Tensor& y);
// W x + b
Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b);
// G += a b^T
void add_outer(Tensor& g, const Tensor& a, const Tensor& b);
// y += s * x
void add_scaled(Tensor& y, const Tensor& x, double s = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor emul(const Tensor& a, const Tensor& b);
void scale(Tensor& t, double s);
// Column `col` of a matrix as a fresh vector (embedding lookup).
Tensor column_of(const Tensor& m, std::size_t col);

Tensor tanh_vec(const Tensor& x);
Tensor sigmoid_vec(const Tensor& x);
// dx given y = tanh(x) and upstream dy
Tensor tanh_backward(const Tensor& y, const Tensor& dy);
// dx given y = sigmoid(x) and upstream dy
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

// Max-shifted log-softmax; exact input for cross-entropy in log space.
Tensor log_softmax(const Tensor& logits);
// p_j = exp(l_j / T) / sum_k exp(l_k / T), max-shifted. T must be > 0.
Tensor softmax_with_temperature(const Tensor& logits, double temperature);

// Round every element to the nearest float32 value. Models running in the
// 32-bit opt-in mode pass parameters and per-step activations through this.
void round_to_f32(Tensor& t);

}  // namespace ctxgen
