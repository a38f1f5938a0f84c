#include "sgnet/model.hpp"

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sgnet {

std::string_view to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::kDual: return "dual";
    case AggregationMode::kVanillaOnly: return "vanilla_only";
    case AggregationMode::kSyntaxOnly: return "syntax_only";
    case AggregationMode::kConcatenation: return "concatenation";
  }
  return "dual";
}

AggregationMode aggregation_mode_from_string(std::string_view s) {
  if (s == "dual") return AggregationMode::kDual;
  if (s == "vanilla_only") return AggregationMode::kVanillaOnly;
  if (s == "syntax_only") return AggregationMode::kSyntaxOnly;
  if (s == "concatenation") return AggregationMode::kConcatenation;
  throw std::invalid_argument("unknown aggregation mode '" + std::string(s) + "'");
}

std::string_view to_string(MaskMode m) { return m == MaskMode::kLiteral ? "literal" : "additive"; }

MaskMode mask_mode_from_string(std::string_view s) {
  if (s == "additive") return MaskMode::kAdditive;
  if (s == "literal") return MaskMode::kLiteral;
  throw std::invalid_argument("unknown mask mode '" + std::string(s) + "'");
}

void SgNetConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (heads == 0 || d_model % heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
  if (vocab_size == 0 || max_positions == 0 || d_ff == 0) {
    throw std::invalid_argument("vocab_size, max_positions and d_ff must be positive");
  }
}

void to_json(nlohmann::json& j, const SgNetConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"aggregation", to_string(c.aggregation)},
                     {"mask_mode", to_string(c.mask_mode)},
                     {"vocab_size", c.vocab_size},
                     {"max_positions", c.max_positions},
                     {"d_model", c.d_model},
                     {"heads", c.heads},
                     {"d_ff", c.d_ff},
                     {"encoder_layers", c.encoder_layers},
                     {"syntax_layers", c.syntax_layers},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SgNetConfig& c) {
  SgNetConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.aggregation = aggregation_mode_from_string(j.value("aggregation", std::string(to_string(d.aggregation))));
  c.mask_mode = mask_mode_from_string(j.value("mask_mode", std::string(to_string(d.mask_mode))));
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.d_model = j.value("d_model", d.d_model);
  c.heads = j.value("heads", d.heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.syntax_layers = j.value("syntax_layers", d.syntax_layers);
  c.seed = j.value("seed", d.seed);
}

namespace {

template <typename T>
Parameter<T> gaussian(const std::string& name, std::size_t rows, std::size_t cols, double stddev,
                      std::mt19937_64& rng) {
  Parameter<T> p{name, Tensor<T>(rows, cols)};
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : p.value.data()) v = static_cast<T>(dist(rng));
  return p;
}

template <typename T>
Parameter<T> constant(const std::string& name, std::size_t rows, std::size_t cols, T value) {
  return Parameter<T>{name, Tensor<T>(rows, cols, value)};
}

}  // namespace

template <typename T>
SgNetModel<T> SgNetModel<T>::init(const SgNetConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.d_model;
  SgNetModel m;
  m.config = config;
  m.token_embedding = gaussian<T>("embed.token", config.vocab_size, d, 1.0, rng);
  m.position_embedding = gaussian<T>("embed.position", config.max_positions, d, 1.0, rng);
  m.emb_ln_gain = constant<T>("embed.ln_gain", 1, d, T(1));
  m.emb_ln_bias = constant<T>("embed.ln_bias", 1, d, T(0));
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    m.encoder.push_back(AttentionParams<T>::random("encoder" + std::to_string(l), d, config.heads, config.d_ff, rng));
  }
  for (std::size_t l = 0; l < config.syntax_layers; ++l) {
    m.syntax.push_back(AttentionParams<T>::random("syntax" + std::to_string(l), d, config.heads, config.d_ff, rng));
  }
  m.vanilla_extra = AttentionParams<T>::random("vanilla_extra", d, config.heads, config.d_ff, rng);
  m.concat_w = gaussian<T>("concat.w", 2 * d, d, 1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
  m.concat_b = constant<T>("concat.b", 1, d, T(0));
  m.span_w = gaussian<T>("span.w", d, 2, 0.02, rng);
  m.span_b = constant<T>("span.b", 1, 2, T(0));
  m.choice_w = gaussian<T>("choice.w", d, 1, 0.02, rng);
  m.choice_b = constant<T>("choice.b", 1, 1, T(0));
  return m;
}

template <typename T>
std::size_t SgNetModel<T>::parameter_count() const {
  std::size_t total = 0;
  visit([&](const Parameter<T>& p) { total += p.value.size(); });
  return total;
}

template <typename T>
EncodedVars<T> record_encode(GradientTape<T>& tape, const SgNetModel<T>& model, std::span<const std::size_t> tokens,
                             const SdoiMask& mask, EncodeTraces<T>* traces) {
  const auto& cfg = model.config;
  const std::size_t n = tokens.size();
  if (n == 0) throw std::invalid_argument("encode: empty token sequence");
  if (mask.size() != n) {
    throw ShapeError("encode: mask size " + std::to_string(mask.size()) + " != token count " + std::to_string(n));
  }
  if (n > cfg.max_positions) throw std::invalid_argument("encode: sequence longer than max_positions");
  for (auto id : tokens) {
    if (id >= cfg.vocab_size) throw std::out_of_range("encode: unknown token index " + std::to_string(id));
  }
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;

  EncodedVars<T> out;
  auto x = tape.add(tape.gather_rows(tape.parameter(model.token_embedding), tokens),
                    tape.gather_rows(tape.parameter(model.position_embedding), positions));
  x = tape.layer_norm(x, tape.parameter(model.emb_ln_gain), tape.parameter(model.emb_ln_bias));
  for (std::size_t l = 0; l < model.encoder.size(); ++l) {
    const bool last = l + 1 == model.encoder.size();
    AttentionTrace<T>* tr = nullptr;
    if (traces && last) {
      traces->vanilla.heads.clear();
      tr = &traces->vanilla;
    }
    x = record_attention_block(tape, x, model.encoder[l], nullptr, MaskMode::kAdditive, tr);
  }
  out.h = x;

  if (cfg.aggregation == AggregationMode::kVanillaOnly) {
    AttentionTrace<T>* tr = nullptr;
    if (traces) {
      traces->vanilla.heads.clear();
      tr = &traces->vanilla;
    }
    out.h_bar = record_attention_block(tape, out.h, model.vanilla_extra, nullptr, MaskMode::kAdditive, tr);
    return out;
  }

  auto hp = out.h;
  for (std::size_t l = 0; l < model.syntax.size(); ++l) {
    const bool last = l + 1 == model.syntax.size();
    AttentionTrace<T>* tr = nullptr;
    if (traces && last) {
      traces->syntax.heads.clear();
      tr = &traces->syntax;
    }
    hp = record_attention_block(tape, hp, model.syntax[l], &mask, cfg.mask_mode, tr);
  }
  out.h_prime = hp;

  switch (cfg.aggregation) {
    case AggregationMode::kDual:
      out.h_bar = record_aggregate(tape, out.h, out.h_prime, cfg.alpha);
      break;
    case AggregationMode::kSyntaxOnly:
      out.h_bar = out.h_prime;
      break;
    case AggregationMode::kConcatenation: {
      const std::array<typename GradientTape<T>::Var, 2> parts{out.h, out.h_prime};
      out.h_bar = tape.linear(tape.concat_cols(parts), tape.parameter(model.concat_w), tape.parameter(model.concat_b));
      break;
    }
    case AggregationMode::kVanillaOnly:
      break;
  }
  return out;
}

template <typename T>
EncodedSequence<T> encode(const SgNetModel<T>& model, std::span<const std::size_t> tokens, const SdoiMask& mask,
                          EncodeTraces<T>* traces) {
  GradientTape<T> tape(false);
  auto vars = record_encode(tape, model, tokens, mask, traces);
  EncodedSequence<T> out;
  out.h = tape.value(vars.h);
  if (vars.h_prime.valid()) out.h_prime = tape.value(vars.h_prime);
  out.h_bar = tape.value(vars.h_bar);
  return out;
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& h, const Tensor<T>& h_prime, double alpha) {
  if (!h.same_shape(h_prime)) throw ShapeError("aggregate: H and H' shapes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("aggregate: alpha must lie in [0, 1]");
  Tensor<T> out(h.rows(), h.cols());
  const T a = static_cast<T>(alpha);
  const T b = static_cast<T>(1.0 - alpha);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * h[k] + b * h_prime[k];
  return out;
}

template <typename T>
typename GradientTape<T>::Var record_aggregate(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                               typename GradientTape<T>::Var h_prime, double alpha) {
  if (!tape.value(h).same_shape(tape.value(h_prime))) throw ShapeError("aggregate: H and H' shapes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("aggregate: alpha must lie in [0, 1]");
  return tape.add(tape.scale(h, static_cast<T>(alpha)), tape.scale(h_prime, static_cast<T>(1.0 - alpha)));
}

#define SGNET_INSTANTIATE(T)                                                                                \
  template struct SgNetModel<T>;                                                                            \
  template EncodedVars<T> record_encode(GradientTape<T>&, const SgNetModel<T>&, std::span<const std::size_t>, \
                                        const SdoiMask&, EncodeTraces<T>*);                                 \
  template EncodedSequence<T> encode(const SgNetModel<T>&, std::span<const std::size_t>, const SdoiMask&,    \
                                     EncodeTraces<T>*);                                                     \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, double);                                 \
  template GradientTape<T>::Var record_aggregate(GradientTape<T>&, GradientTape<T>::Var, GradientTape<T>::Var, \
                                                 double);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
