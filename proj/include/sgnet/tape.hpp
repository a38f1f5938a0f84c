#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgnet/sdoi.hpp"
#include "sgnet/tensor.hpp"

namespace sgnet {

/// A named trainable matrix.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

/// Records a computation over tensors and replays it backwards to get
/// d(loss)/d(parameter). One tape per step, used by one thread at a time.
template <typename T>
class GradientTape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  /// With record = false only values are computed (inference).
  explicit GradientTape(bool record = true) : record_(record) {}
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;
  GradientTape(GradientTape&&) = default;
  GradientTape& operator=(GradientTape&&) = default;

  Var constant(Tensor<T> value);
  /// Leaf bound to `p`. Binding the same parameter twice returns the same leaf.
  Var parameter(const Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() target; zeros if `v` did not contribute.
  Tensor<T> grad(Var v) const;
  /// Gradient for a bound parameter, zeros if it was never bound.
  Tensor<T> parameter_grad(const Parameter<T>& p) const;

  std::size_t node_count() const { return nodes_.size(); }
  bool recording() const { return record_; }

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  /// x + broadcast row vector b
  Var add_bias(Var x, Var b);
  Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }
  Var scale(Var x, T s);
  Var gelu(Var x);
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(kLayerNormEps));
  Var softmax_masked(Var logits, const SdoiMask* mask, MaskMode mode = MaskMode::kAdditive);
  Var log_softmax_rows(Var x);
  Var transpose(Var x);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var x, std::size_t c0, std::size_t c1);
  Var slice_rows(Var x, std::size_t r0, std::size_t r1);
  /// 1 x 1 element selection
  Var pick(Var x, std::size_t r, std::size_t c);
  /// 1 x 1 sum of all elements
  Var sum(Var x);
  /// rows of `table` selected by ids
  Var gather_rows(Var table, std::span<const std::size_t> ids);

  /// Backpropagates from a 1 x 1 node. Gradients from earlier calls are
  /// discarded.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(GradientTape&, const Node&)> back;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, std::function<void(GradientTape&, const Node&)> back);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Tensor<T>& grad_ref(Var v);

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  bool passed = true;
  std::optional<GradCheckEntry> worst;
};

template <typename T>
using LossFn = std::function<typename GradientTape<T>::Var(GradientTape<T>&)>;

/// Compares tape gradients with central differences (f(x+h) - f(x-h)) / 2h
/// for every coordinate of every parameter. The relative error of a
/// coordinate is |a - n| / max(|a|, |n|, abs_floor).
template <typename T>
GradCheckReport grad_check(const LossFn<T>& loss_fn, std::span<Parameter<T>* const> params, T h, double tolerance,
                           double abs_floor = 1e-6);

}  // namespace sgnet
