#include "sgnet/attention.hpp"

#include <cmath>

namespace sgnet {

namespace {

template <typename T>
Parameter<T> make(const std::string& name, std::size_t rows, std::size_t cols, T fill = T(0)) {
  return Parameter<T>{name, Tensor<T>(rows, cols, fill)};
}

template <typename T>
void randomize(Parameter<T>& p, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(p.value.rows())));
  for (auto& v : p.value.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
AttentionParams<T> AttentionParams<T>::zeros(const std::string& prefix, std::size_t d_model, std::size_t heads,
                                             std::size_t d_ff) {
  if (heads == 0 || d_model % heads != 0) {
    throw ShapeError("attention: d_model " + std::to_string(d_model) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dk = d_model / heads;
  AttentionParams p;
  for (std::size_t i = 0; i < heads; ++i) {
    const auto hp = prefix + ".head" + std::to_string(i);
    p.heads.push_back(HeadParams<T>{make<T>(hp + ".wq", d_model, dk), make<T>(hp + ".bq", 1, dk),
                                    make<T>(hp + ".wk", d_model, dk), make<T>(hp + ".bk", 1, dk),
                                    make<T>(hp + ".wv", d_model, dk), make<T>(hp + ".bv", 1, dk)});
  }
  p.wo = make<T>(prefix + ".wo", heads * dk, d_model);
  p.bo = make<T>(prefix + ".bo", 1, d_model);
  p.ff1_w = make<T>(prefix + ".ff1_w", d_model, d_ff);
  p.ff1_b = make<T>(prefix + ".ff1_b", 1, d_ff);
  p.ff2_w = make<T>(prefix + ".ff2_w", d_ff, d_model);
  p.ff2_b = make<T>(prefix + ".ff2_b", 1, d_model);
  p.ln_gain = make<T>(prefix + ".ln_gain", 1, d_model, T(1));
  p.ln_bias = make<T>(prefix + ".ln_bias", 1, d_model);
  return p;
}

template <typename T>
AttentionParams<T> AttentionParams<T>::random(const std::string& prefix, std::size_t d_model, std::size_t heads,
                                              std::size_t d_ff, std::mt19937_64& rng) {
  auto p = zeros(prefix, d_model, heads, d_ff);
  for (auto& h : p.heads) {
    randomize(h.wq, rng);
    randomize(h.wk, rng);
    randomize(h.wv, rng);
  }
  randomize(p.wo, rng);
  randomize(p.ff1_w, rng);
  randomize(p.ff2_w, rng);
  return p;
}

template <typename T>
void AttentionParams<T>::validate() const {
  if (heads.empty()) throw ShapeError("attention: at least one head is required");
  const std::size_t d = wo.value.cols();
  const std::size_t dv_total = wo.value.rows();
  std::size_t dv_sum = 0;
  for (const auto& h : heads) {
    expect_shape(h.wq.value, d, h.wq.value.cols(), h.wq.name);
    expect_shape(h.wk.value, d, h.wq.value.cols(), h.wk.name);  // d_q == d_k
    expect_shape(h.bq.value, 1, h.wq.value.cols(), h.bq.name);
    expect_shape(h.bk.value, 1, h.wk.value.cols(), h.bk.name);
    expect_shape(h.wv.value, d, h.wv.value.cols(), h.wv.name);
    expect_shape(h.bv.value, 1, h.wv.value.cols(), h.bv.name);
    dv_sum += h.wv.value.cols();
  }
  if (dv_sum != dv_total) throw ShapeError("attention: output projection rows must equal h * d_v");
  const std::size_t dff = ff1_w.value.cols();
  expect_shape(bo.value, 1, d, bo.name);
  expect_shape(ff1_w.value, d, dff, ff1_w.name);
  expect_shape(ff1_b.value, 1, dff, ff1_b.name);
  expect_shape(ff2_w.value, dff, d, ff2_w.name);
  expect_shape(ff2_b.value, 1, d, ff2_b.name);
  expect_shape(ln_gain.value, 1, d, ln_gain.name);
  expect_shape(ln_bias.value, 1, d, ln_bias.name);
}

template <typename T>
AttentionVars<T> record_multi_head_attention(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                             const AttentionParams<T>& params, const SdoiMask* mask,
                                             MaskMode mode) {
  const auto& H = tape.value(h);
  if (H.cols() != params.d_model()) {
    throw ShapeError("attention: input width " + std::to_string(H.cols()) + " != d_model " +
                     std::to_string(params.d_model()));
  }
  if (mask && mask->size() != H.rows()) {
    throw ShapeError("attention: mask size " + std::to_string(mask->size()) + " != sequence length " +
                     std::to_string(H.rows()));
  }
  AttentionVars<T> out;
  std::vector<typename GradientTape<T>::Var> per_head;
  for (const auto& hp : params.heads) {
    auto q = tape.linear(h, tape.parameter(hp.wq), tape.parameter(hp.bq));
    auto k = tape.linear(h, tape.parameter(hp.wk), tape.parameter(hp.bk));
    auto v = tape.linear(h, tape.parameter(hp.wv), tape.parameter(hp.bv));
    const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(hp.wk.value.cols()));
    auto logits = tape.scale(tape.matmul_nt(q, k), inv_sqrt_dk);
    auto a = tape.softmax_masked(logits, mask, mode);
    out.weights.push_back(a);
    per_head.push_back(tape.matmul(a, v));
  }
  auto cat = per_head.size() == 1 ? per_head[0] : tape.concat_cols(per_head);
  out.output = tape.linear(cat, tape.parameter(params.wo), tape.parameter(params.bo));
  return out;
}

template <typename T>
typename GradientTape<T>::Var record_attention_block(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                                     const AttentionParams<T>& params, const SdoiMask* mask,
                                                     MaskMode mode, AttentionTrace<T>* trace) {
  auto att = record_multi_head_attention(tape, h, params, mask, mode);
  if (trace) {
    for (auto w : att.weights) trace->heads.push_back(tape.value(w));
  }
  auto ff = tape.linear(att.output, tape.parameter(params.ff1_w), tape.parameter(params.ff1_b));
  ff = tape.linear(tape.gelu(ff), tape.parameter(params.ff2_w), tape.parameter(params.ff2_b));
  return tape.layer_norm(tape.add(h, ff), tape.parameter(params.ln_gain), tape.parameter(params.ln_bias));
}

template <typename T>
std::pair<Tensor<T>, AttentionTrace<T>> multi_head_attention(const Tensor<T>& h, const AttentionParams<T>& params,
                                                             const SdoiMask* mask, MaskMode mode) {
  params.validate();
  GradientTape<T> tape(false);
  auto att = record_multi_head_attention(tape, tape.constant(h), params, mask, mode);
  AttentionTrace<T> trace;
  for (auto w : att.weights) trace.heads.push_back(tape.value(w));
  return {tape.value(att.output), std::move(trace)};
}

template <typename T>
Tensor<T> sdoi_attention_block(const Tensor<T>& h, const AttentionParams<T>& params, const SdoiMask& mask,
                               MaskMode mode) {
  params.validate();
  GradientTape<T> tape(false);
  auto out = record_attention_block(tape, tape.constant(h), params, &mask, mode);
  return tape.value(out);
}

template <typename T>
Tensor<T> vanilla_attention_block(const Tensor<T>& h, const AttentionParams<T>& params) {
  params.validate();
  GradientTape<T> tape(false);
  auto out = record_attention_block(tape, tape.constant(h), params, nullptr);
  return tape.value(out);
}

#define SGNET_INSTANTIATE(T)                                                                                     \
  template struct AttentionParams<T>;                                                                            \
  template AttentionVars<T> record_multi_head_attention(GradientTape<T>&, GradientTape<T>::Var,                  \
                                                        const AttentionParams<T>&, const SdoiMask*, MaskMode);   \
  template GradientTape<T>::Var record_attention_block(GradientTape<T>&, GradientTape<T>::Var,                   \
                                                       const AttentionParams<T>&, const SdoiMask*, MaskMode,     \
                                                       AttentionTrace<T>*);                                      \
  template std::pair<Tensor<T>, AttentionTrace<T>> multi_head_attention(const Tensor<T>&,                        \
                                                                        const AttentionParams<T>&,                \
                                                                        const SdoiMask*, MaskMode);               \
  template Tensor<T> sdoi_attention_block(const Tensor<T>&, const AttentionParams<T>&, const SdoiMask&,          \
                                          MaskMode);                                                             \
  template Tensor<T> vanilla_attention_block(const Tensor<T>&, const AttentionParams<T>&);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
