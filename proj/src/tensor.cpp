#include "sgnet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace sgnet {

template <typename T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

template <typename T>
Tensor<T>::Tensor(std::initializer_list<std::initializer_list<T>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged tensor initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::row_vector(std::vector<T> values) {
  const std::size_t d = values.size();
  return Tensor(1, d, std::move(values));
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  }
  return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  T worst = T(0);
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  return worst;
}

template <typename T>
void expect_shape(const Tensor<T>& t, std::size_t rows, std::size_t cols, const std::string& what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                     std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  }
}

namespace {

template <typename T>
Tensor<T> checked(Tensor<T> t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite result");
  return t;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Tensor<T> out(a.rows(), b.cols());
  detail::gemm(a, false, b, false, out, false);
  return checked(std::move(out), "matmul");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.cols() != w.rows()) throw ShapeError("linear: input width does not match weight rows");
  expect_shape(b, 1, w.cols(), "linear bias");
  Tensor<T> out(x.rows(), w.cols());
  detail::gemm(x, false, w, false, out, false);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += b[c];
  }
  return checked(std::move(out), "linear");
}

template <typename T>
Tensor<T> softmax_masked(const Tensor<T>& logits, const SdoiMask* mask, MaskMode mode) {
  if (logits.rows() != logits.cols()) throw ShapeError("softmax_masked: logits must be square");
  if (mask && mask->size() != logits.rows()) throw ShapeError("softmax_masked: mask size mismatch");
  Tensor<T> out(logits.rows(), logits.cols());
  detail::softmax_rows(logits, mask, mode, out);
  return checked(std::move(out), "softmax_masked");
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = detail::gelu_value(x[k]);
  return checked(std::move(out), "gelu");
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  expect_shape(gain, 1, x.cols(), "layer_norm gain");
  expect_shape(bias, 1, x.cols(), "layer_norm bias");
  Tensor<T> out(x.rows(), x.cols());
  const T d = static_cast<T>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    T mean = T(0);
    for (T v : in) mean += v;
    mean /= d;
    T var = T(0);
    for (T v : in) var += (v - mean) * (v - mean);
    var /= d;
    const T inv = T(1) / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) o[c] = (in[c] - mean) * inv * gain[c] + bias[c];
  }
  return checked(std::move(out), "layer_norm");
}

#define SGNET_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                   \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                \
  template void expect_shape(const Tensor<T>&, std::size_t, std::size_t, const std::string&); \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> softmax_masked(const Tensor<T>&, const SdoiMask*, MaskMode);             \
  template Tensor<T> gelu(const Tensor<T>&);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
