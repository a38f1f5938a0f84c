#pragma once

// Shared dense kernels for the forward primitives and the gradient tape.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "sgnet/sdoi.hpp"
#include "sgnet/tensor.hpp"

namespace sgnet::detail {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMajor<T>> view(const Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<RowMajor<T>> view(Tensor<T>& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

/// out (+)= op(a) * op(b)
template <typename T>
void gemm(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb, Tensor<T>& out, bool accumulate) {
  auto o = view(out);
  auto A = view(a);
  auto B = view(b);
  if (!accumulate) o.setZero();
  if (!ta && !tb) {
    o.noalias() += A * B;
  } else if (ta && !tb) {
    o.noalias() += A.transpose() * B;
  } else if (!ta && tb) {
    o.noalias() += A * B.transpose();
  } else {
    o.noalias() += A.transpose() * B.transpose();
  }
}

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(3.14159265358979323846));
  return cdf + x * pdf;
}

/// Row-wise softmax of `logits` into `out`. With a mask in kAdditive mode the
/// masked entries are exactly 0; kLiteral multiplies logits by the mask bits.
template <typename T>
void softmax_rows(const Tensor<T>& logits, const SdoiMask* mask, MaskMode mode, Tensor<T>& out) {
  const std::size_t n = logits.rows();
  const std::size_t m = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const auto in = logits.row(i);
    auto o = out.row(i);
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      T v = in[j];
      if (mask) {
        const bool keep = (*mask)(i, j);
        if (mode == MaskMode::kAdditive && !keep) continue;
        if (mode == MaskMode::kLiteral && !keep) v = T(0);
      }
      any = true;
      mx = std::max(mx, v);
    }
    if (!any) throw NumericError("softmax_masked: row " + std::to_string(i) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      T v = in[j];
      if (mask && !(*mask)(i, j)) {
        if (mode == MaskMode::kAdditive) {
          o[j] = T(0);
          continue;
        }
        v = T(0);
      }
      o[j] = std::exp(v - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < m; ++j) o[j] /= total;
  }
}

}  // namespace sgnet::detail
