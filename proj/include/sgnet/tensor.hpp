#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgnet {

class SdoiMask;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix. Vectors are 1 x d.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T{0}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data);
  Tensor(std::initializer_list<std::initializer_list<T>> rows);

  static Tensor identity(std::size_t n);
  static Tensor row_vector(std::vector<T> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t k) { return data_[k]; }
  T operator[](std::size_t k) const { return data_[k]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols_, cols_); }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols_, cols_); }

  void fill(T v);
  bool all_finite() const;
  Tensor transposed() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows_, cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) out[k] = static_cast<U>(data_[k]);
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Largest absolute elementwise difference; shapes must agree.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// How a mask enters the attention logits.
enum class MaskMode {
  kAdditive,  // masked logits replaced by -inf before the softmax (hard zeros)
  kLiteral,   // logits multiplied elementwise by the 0/1 mask
};

inline constexpr double kLayerNormEps = 1e-5;

// Forward primitives. Each validates shapes and checks its result is finite.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[n x d_in] * w[d_in x d_out] + b[1 x d_out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Row softmax with optional mask. With kAdditive, probability is exactly 0
/// wherever the mask is 0. Throws NumericError on an all-masked row.
template <typename T>
Tensor<T> softmax_masked(const Tensor<T>& logits, const SdoiMask* mask, MaskMode mode = MaskMode::kAdditive);

/// x * Phi(x), exact erf form.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(kLayerNormEps));

/// Checks that `t` has the given shape, throwing ShapeError naming `what`.
template <typename T>
void expect_shape(const Tensor<T>& t, std::size_t rows, std::size_t cols, const std::string& what);

}  // namespace sgnet
