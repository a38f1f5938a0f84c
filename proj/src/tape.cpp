#include "sgnet/tape.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace sgnet {

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::push(Tensor<T> value, bool requires_grad,
                                                    std::function<void(GradientTape&, const Node&)> back) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_ && requires_grad;
  if (node.requires_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& GradientTape<T>::grad_ref(Var v) {
  auto& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
Tensor<T> GradientTape<T>::grad(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
Tensor<T> GradientTape<T>::parameter_grad(const Parameter<T>& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return Tensor<T>(p.value.rows(), p.value.cols());
  return grad(Var{it->second});
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::parameter(const Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{it->second};
  auto v = push(p.value, true, nullptr);
  bound_.emplace(&p, v.id);
  return v;
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + " * " +
                     std::to_string(B.rows()) + "x" + std::to_string(B.cols()));
  }
  Tensor<T> out(A.rows(), B.cols());
  detail::gemm(A, false, B, false, out, false);
  return push(std::move(out), needs(a) || needs(b), [a, b](GradientTape& t, const Node& self) {
    if (t.needs(a)) detail::gemm(self.grad, false, t.value(b), true, t.grad_ref(a), true);
    if (t.needs(b)) detail::gemm(t.value(a), true, self.grad, false, t.grad_ref(b), true);
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::matmul_nt(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Tensor<T> out(A.rows(), B.rows());
  detail::gemm(A, false, B, true, out, false);
  return push(std::move(out), needs(a) || needs(b), [a, b](GradientTape& t, const Node& self) {
    if (t.needs(a)) detail::gemm(self.grad, false, t.value(b), false, t.grad_ref(a), true);
    if (t.needs(b)) detail::gemm(self.grad, true, t.value(a), false, t.grad_ref(b), true);
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
  Tensor<T> out = A;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += B[k];
  return push(std::move(out), needs(a) || needs(b), [a, b](GradientTape& t, const Node& self) {
    for (Var v : {a, b}) {
      if (!t.needs(v)) continue;
      auto& g = t.grad_ref(v);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::add_bias(Var x, Var b) {
  const auto& X = value(x);
  const auto& B = value(b);
  expect_shape(B, 1, X.cols(), "add_bias");
  Tensor<T> out = X;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += B[c];
  }
  return push(std::move(out), needs(x) || needs(b), [x, b](GradientTape& t, const Node& self) {
    if (t.needs(x)) {
      auto& g = t.grad_ref(x);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
    }
    if (t.needs(b)) {
      auto& g = t.grad_ref(b);
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        const auto row = self.grad.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) g[c] += row[c];
      }
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::scale(Var x, T s) {
  Tensor<T> out = value(x);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= s;
  return push(std::move(out), needs(x), [x, s](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * self.grad[k];
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::gelu(Var x) {
  const auto& X = value(x);
  Tensor<T> out(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) out[k] = detail::gelu_value(X[k]);
  return push(std::move(out), needs(x), [x](GradientTape& t, const Node& self) {
    const auto& in = t.value(x);
    auto& g = t.grad_ref(x);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k] * detail::gelu_derivative(in[k]);
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const auto& X = value(x);
  const auto& G = value(gain);
  const auto& B = value(bias);
  expect_shape(G, 1, X.cols(), "layer_norm gain");
  expect_shape(B, 1, X.cols(), "layer_norm bias");
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  Tensor<T> xhat(n, d);
  std::vector<T> inv_std(n);
  Tensor<T> out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto in = X.row(r);
    T mean = T(0);
    for (T v : in) mean += v;
    mean /= static_cast<T>(d);
    T var = T(0);
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (in[c] - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * G[c] + B[c];
    }
  }
  return push(std::move(out), needs(x) || needs(gain) || needs(bias),
              [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](GradientTape& t,
                                                                                    const Node& self) {
                const auto& dy = self.grad;
                const std::size_t rows = dy.rows();
                const std::size_t cols = dy.cols();
                if (t.needs(gain) || t.needs(bias)) {
                  auto* gg = t.needs(gain) ? &t.grad_ref(gain) : nullptr;
                  auto* gb = t.needs(bias) ? &t.grad_ref(bias) : nullptr;
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      if (gg) (*gg)[c] += dy(r, c) * xhat(r, c);
                      if (gb) (*gb)[c] += dy(r, c);
                    }
                  }
                }
                if (!t.needs(x)) return;
                const auto& G = t.value(gain);
                auto& gx = t.grad_ref(x);
                const T dn = static_cast<T>(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                  T mean_d = T(0);
                  T mean_dx = T(0);
                  for (std::size_t c = 0; c < cols; ++c) {
                    const T dxh = dy(r, c) * G[c];
                    mean_d += dxh;
                    mean_dx += dxh * xhat(r, c);
                  }
                  mean_d /= dn;
                  mean_dx /= dn;
                  for (std::size_t c = 0; c < cols; ++c) {
                    const T dxh = dy(r, c) * G[c];
                    gx(r, c) += inv_std[r] * (dxh - mean_d - xhat(r, c) * mean_dx);
                  }
                }
              });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::softmax_masked(Var logits, const SdoiMask* mask, MaskMode mode) {
  const auto& L = value(logits);
  if (L.rows() != L.cols()) throw ShapeError("softmax_masked: logits must be square");
  if (mask && mask->size() != L.rows()) throw ShapeError("softmax_masked: mask size mismatch");
  Tensor<T> out(L.rows(), L.cols());
  detail::softmax_rows(L, mask, mode, out);
  std::optional<SdoiMask> literal;
  if (mask && mode == MaskMode::kLiteral) literal = *mask;
  return push(std::move(out), needs(logits), [logits, literal = std::move(literal)](GradientTape& t, const Node& self) {
    const auto& y = self.value;
    const auto& dy = self.grad;
    auto& g = t.grad_ref(logits);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) {
        // masked entries have y = 0 in additive mode; in literal mode the
        // logit was replaced by a constant
        if (literal && !(*literal)(i, j)) continue;
        g(i, j) += y(i, j) * (dy(i, j) - dot);
      }
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::log_softmax_rows(Var x) {
  const auto& X = value(x);
  Tensor<T> out(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto in = X.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T total = T(0);
    for (T v : in) total += std::exp(v - mx);
    const T lse = mx + std::log(total);
    for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = in[c] - lse;
  }
  return push(std::move(out), needs(x), [x](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      T gsum = T(0);
      for (std::size_t c = 0; c < self.value.cols(); ++c) gsum += self.grad(r, c);
      for (std::size_t c = 0; c < self.value.cols(); ++c) {
        g(r, c) += self.grad(r, c) - std::exp(self.value(r, c)) * gsum;
      }
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::transpose(Var x) {
  return push(value(x).transposed(), needs(x), [x](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(c, r);
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += value(p).cols();
    req = req || needs(p);
  }
  Tensor<T> out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& P = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < P.cols(); ++c) out(r, off + c) = P(r, c);
    }
    off += P.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), req, [inputs = std::move(inputs)](GradientTape& t, const Node& self) {
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t pc = t.value(p).cols();
      if (t.needs(p)) {
        auto& g = t.grad_ref(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < pc; ++c) g(r, c) += self.grad(r, off + c);
        }
      }
      off += pc;
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::slice_cols(Var x, std::size_t c0, std::size_t c1) {
  const auto& X = value(x);
  if (c0 > c1 || c1 > X.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor<T> out(X.rows(), c1 - c0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = X(r, c);
  }
  return push(std::move(out), needs(x), [x, c0](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      for (std::size_t c = 0; c < self.grad.cols(); ++c) g(r, c0 + c) += self.grad(r, c);
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::slice_rows(Var x, std::size_t r0, std::size_t r1) {
  const auto& X = value(x);
  if (r0 > r1 || r1 > X.rows()) throw ShapeError("slice_rows: range out of bounds");
  Tensor<T> out(r1 - r0, X.cols());
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = 0; c < X.cols(); ++c) out(r - r0, c) = X(r, c);
  }
  return push(std::move(out), needs(x), [x, r0](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      for (std::size_t c = 0; c < self.grad.cols(); ++c) g(r0 + r, c) += self.grad(r, c);
    }
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::pick(Var x, std::size_t r, std::size_t c) {
  const auto& X = value(x);
  if (r >= X.rows() || c >= X.cols()) throw ShapeError("pick: index out of bounds");
  return push(Tensor<T>(1, 1, X(r, c)), needs(x), [x, r, c](GradientTape& t, const Node& self) {
    t.grad_ref(x)(r, c) += self.grad[0];
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::sum(Var x) {
  T total = T(0);
  for (T v : value(x).data()) total += v;
  return push(Tensor<T>(1, 1, total), needs(x), [x](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(x);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[0];
  });
}

template <typename T>
typename GradientTape<T>::Var GradientTape<T>::gather_rows(Var table, std::span<const std::size_t> ids) {
  const auto& W = value(table);
  Tensor<T> out(ids.size(), W.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= W.rows()) throw std::out_of_range("gather_rows: id " + std::to_string(ids[k]) + " out of range");
    const auto src = W.row(ids[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return push(std::move(out), needs(table), [table, idx = std::move(idx)](GradientTape& t, const Node& self) {
    auto& g = t.grad_ref(table);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = g.row(idx[k]);
      const auto src = self.grad.row(k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
void GradientTape<T>::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  const auto& L = value(loss);
  if (L.rows() != 1 || L.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad_ref(loss)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (n.back && !n.grad.empty()) n.back(*this, n);
  }
}

template <typename T>
GradCheckReport grad_check(const LossFn<T>& loss_fn, std::span<Parameter<T>* const> params, T h, double tolerance,
                           double abs_floor) {
  GradCheckReport report;
  if (params.empty()) return report;

  std::vector<Tensor<T>> analytic;
  {
    GradientTape<T> tape;
    auto loss = loss_fn(tape);
    if (!std::isfinite(tape.value(loss)[0])) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
    for (auto* p : params) analytic.push_back(tape.parameter_grad(*p));
  }

  auto eval = [&]() {
    GradientTape<T> tape(false);
    const T v = tape.value(loss_fn(tape))[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return static_cast<double>(v);
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi]->value;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const T saved = value[k];
      value[k] = saved + h;
      const double up = eval();
      value[k] = saved - h;
      const double down = eval();
      value[k] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[pi][k]);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (!report.worst || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = GradCheckEntry{params[pi]->name, k, a, numeric, rel};
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

template class GradientTape<float>;
template class GradientTape<double>;
template GradCheckReport grad_check(const LossFn<float>&, std::span<Parameter<float>* const>, float, double, double);
template GradCheckReport grad_check(const LossFn<double>&, std::span<Parameter<double>* const>, double, double,
                                    double);

}  // namespace sgnet
