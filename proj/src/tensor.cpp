#include "ctxgen/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ctxgen {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got shape " + t.shape_str());
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a,
                                 const Tensor& b) {
  throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                   b.shape_str() + " do not agree");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(product(shape), fill) {}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape), 0.0);
}

Tensor Tensor::vec(std::initializer_list<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.data.assign(values.begin(), values.end());
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size()};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  if (values.size() != rows * cols) {
    throw ShapeError("matrix: " + std::to_string(values.size()) +
                     " values for " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Tensor t;
  t.shape = {rows, cols};
  t.data.assign(values.begin(), values.end());
  return t;
}

std::size_t Tensor::rows() const {
  return shape.empty() ? 0 : shape[0];
}

std::size_t Tensor::cols() const {
  return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * shape[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * shape[1] + c];
}

void Tensor::fill(double v) {
  for (double& x : data) x = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool all_finite(const Tensor& t) {
  for (double x : t.data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require_rank(w, 2, "matvec weight");
  require_rank(x, 1, "matvec input");
  if (w.cols() != x.size()) shape_mismatch("matvec", w, x);
  Tensor y({w.rows()});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = w.data.data() + r * w.cols();
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Tensor matvec_transposed(const Tensor& w, const Tensor& x) {
  Tensor y({w.cols()});
  add_matvec_transposed(w, x, y);
  return y;
}

void add_matvec_transposed(const Tensor& w, const Tensor& x, Tensor& y) {
  require_rank(w, 2, "matvec_transposed weight");
  if (w.rows() != x.size() || w.cols() != y.size()) {
    shape_mismatch("matvec_transposed", w, x);
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = w.data.data() + r * w.cols();
    const double xr = x[r];
    for (std::size_t c = 0; c < w.cols(); ++c) y[c] += row[c] * xr;
  }
}

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.rank() != 2 || w.rows() != b.size()) shape_mismatch("affine", w, b);
  Tensor y = matvec(w, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

void add_outer(Tensor& g, const Tensor& a, const Tensor& b) {
  if (g.rank() != 2 || g.rows() != a.size() || g.cols() != b.size()) {
    shape_mismatch("add_outer", a, b);
  }
  for (std::size_t r = 0; r < a.size(); ++r) {
    double* row = g.data.data() + r * g.cols();
    const double ar = a[r];
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
  }
}

void add_scaled(Tensor& y, const Tensor& x, double s) {
  if (y.size() != x.size()) shape_mismatch("add_scaled", y, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_mismatch("add", a, b);
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

Tensor emul(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_mismatch("emul", a, b);
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
  return y;
}

void scale(Tensor& t, double s) {
  for (double& x : t.data) x *= s;
}

Tensor column_of(const Tensor& m, std::size_t col) {
  if (m.rank() != 2 || col >= m.cols()) {
    throw ShapeError("column " + std::to_string(col) +
                     " out of range for shape " + m.shape_str());
  }
  Tensor out({m.rows()});
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m.at(r, col);
  return out;
}

Tensor tanh_vec(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = std::tanh(v);
  return y;
}

Tensor sigmoid_vec(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  if (y.size() != dy.size()) shape_mismatch("tanh_backward", y, dy);
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
  return dx;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  if (y.size() != dy.size()) shape_mismatch("sigmoid_backward", y, dy);
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

Tensor log_softmax(const Tensor& logits) {
  require_rank(logits, 1, "log_softmax");
  if (logits.size() == 0) throw ShapeError("log_softmax: empty input");
  require_finite(logits, "log_softmax input");
  double mx = logits[0];
  for (double v : logits.data) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits.data) z += std::exp(v - mx);
  const double logz = std::log(z);
  Tensor out = logits;
  for (double& v : out.data) v = v - mx - logz;
  return out;
}

Tensor softmax_with_temperature(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ShapeError("softmax_with_temperature: temperature must be > 0");
  }
  Tensor scaled = logits;
  for (double& v : scaled.data) v /= temperature;
  Tensor out = log_softmax(scaled);
  for (double& v : out.data) v = std::exp(v);
  return out;
}

void round_to_f32(Tensor& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace ctxgen
