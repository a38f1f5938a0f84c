#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sgnet/sdoi.hpp"
#include "sgnet/tape.hpp"
#include "sgnet/tensor.hpp"

namespace sgnet {

/// Query/key/value projections of one head.
template <typename T>
struct HeadParams {
  Parameter<T> wq, bq, wk, bk, wv, bv;
};

/// One attention block: per-head projections, output projection, two
/// feed-forward layers and the residual layer norm.
template <typename T>
struct AttentionParams {
  std::vector<HeadParams<T>> heads;
  Parameter<T> wo, bo;    // h*d_v -> d_model
  Parameter<T> ff1_w, ff1_b;  // d_model -> d_ff
  Parameter<T> ff2_w, ff2_b;  // d_ff -> d_model
  Parameter<T> ln_gain, ln_bias;

  /// Zero-initialised block (layer-norm gain = 1). d_k = d_v = d_model / heads.
  static AttentionParams zeros(const std::string& prefix, std::size_t d_model, std::size_t heads, std::size_t d_ff);
  /// Gaussian init with std 1/sqrt(fan_in) on weights, zero biases.
  static AttentionParams random(const std::string& prefix, std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                std::mt19937_64& rng);

  std::size_t d_model() const { return wo.value.cols(); }
  std::size_t head_count() const { return heads.size(); }
  std::size_t d_k() const { return heads.empty() ? 0 : heads[0].wq.value.cols(); }

  /// Throws ShapeError when the dimensions are inconsistent or d_q != d_k.
  void validate() const;

  template <typename F>
  void visit(F&& fn) {
    for (auto& h : heads) {
      for (auto* p : {&h.wq, &h.bq, &h.wk, &h.bk, &h.wv, &h.bv}) fn(*p);
    }
    for (auto* p : {&wo, &bo, &ff1_w, &ff1_b, &ff2_w, &ff2_b, &ln_gain, &ln_bias}) fn(*p);
  }
  template <typename F>
  void visit(F&& fn) const {
    for (const auto& h : heads) {
      for (const auto* p : {&h.wq, &h.bq, &h.wk, &h.bk, &h.wv, &h.bv}) fn(*p);
    }
    for (const auto* p : {&wo, &bo, &ff1_w, &ff1_b, &ff2_w, &ff2_b, &ln_gain, &ln_bias}) fn(*p);
  }
};

/// Post-softmax weights per head, each n x n.
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> heads;
};

template <typename T>
struct AttentionVars {
  typename GradientTape<T>::Var output;  // after the output projection
  std::vector<typename GradientTape<T>::Var> weights;
};

/// Records multi-head attention on `tape`. mask == nullptr is vanilla SAN.
template <typename T>
AttentionVars<T> record_multi_head_attention(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                             const AttentionParams<T>& params, const SdoiMask* mask,
                                             MaskMode mode = MaskMode::kAdditive);

/// layer_norm(H + FF2(gelu(FF1(attention(H))))). Appends head weights to
/// `trace` when given.
template <typename T>
typename GradientTape<T>::Var record_attention_block(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                                     const AttentionParams<T>& params, const SdoiMask* mask,
                                                     MaskMode mode = MaskMode::kAdditive,
                                                     AttentionTrace<T>* trace = nullptr);

template <typename T>
std::pair<Tensor<T>, AttentionTrace<T>> multi_head_attention(const Tensor<T>& h, const AttentionParams<T>& params,
                                                             const SdoiMask* mask,
                                                             MaskMode mode = MaskMode::kAdditive);

/// The syntax-guided block with a mandatory mask.
template <typename T>
Tensor<T> sdoi_attention_block(const Tensor<T>& h, const AttentionParams<T>& params, const SdoiMask& mask,
                               MaskMode mode = MaskMode::kAdditive);

/// The same block without a mask.
template <typename T>
Tensor<T> vanilla_attention_block(const Tensor<T>& h, const AttentionParams<T>& params);

}  // namespace sgnet
