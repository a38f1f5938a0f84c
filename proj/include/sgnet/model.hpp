#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgnet/attention.hpp"
#include "sgnet/sdoi.hpp"
#include "sgnet/tape.hpp"
#include "sgnet/tensor.hpp"

namespace sgnet {

/// How the base-encoder output H and the syntax-branch output H' become H-bar.
enum class AggregationMode {
  kDual,           // alpha * H + (1 - alpha) * H'
  kVanillaOnly,    // extra vanilla block on H; syntax branch skipped
  kSyntaxOnly,     // H'
  kConcatenation,  // [H ; H'] projected back to d_model
};

std::string_view to_string(AggregationMode m);
AggregationMode aggregation_mode_from_string(std::string_view s);
std::string_view to_string(MaskMode m);
MaskMode mask_mode_from_string(std::string_view s);

struct SgNetConfig {
  double alpha = 0.5;
  AggregationMode aggregation = AggregationMode::kDual;
  MaskMode mask_mode = MaskMode::kAdditive;
  std::size_t vocab_size = 64;
  std::size_t max_positions = 64;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  std::size_t encoder_layers = 2;
  std::size_t syntax_layers = 1;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on alpha outside [0,1] or d_model not
  /// divisible by heads.
  void validate() const;

  bool operator==(const SgNetConfig&) const = default;
};

void to_json(nlohmann::json& j, const SgNetConfig& c);
void from_json(const nlohmann::json& j, SgNetConfig& c);

template <typename T>
struct SgNetModel {
  SgNetConfig config;
  Parameter<T> token_embedding;     // vocab x d
  Parameter<T> position_embedding;  // max_positions x d
  Parameter<T> emb_ln_gain, emb_ln_bias;
  std::vector<AttentionParams<T>> encoder;
  std::vector<AttentionParams<T>> syntax;
  AttentionParams<T> vanilla_extra;
  Parameter<T> concat_w, concat_b;  // 2d -> d
  Parameter<T> span_w, span_b;      // d -> 2 (start, end)
  Parameter<T> choice_w, choice_b;  // d -> 1

  /// Random initialisation from config.seed.
  static SgNetModel init(const SgNetConfig& config);

  template <typename F>
  void visit(F&& fn) {
    for (auto* p : {&token_embedding, &position_embedding, &emb_ln_gain, &emb_ln_bias}) fn(*p);
    for (auto& b : encoder) b.visit(fn);
    for (auto& b : syntax) b.visit(fn);
    vanilla_extra.visit(fn);
    for (auto* p : {&concat_w, &concat_b, &span_w, &span_b, &choice_w, &choice_b}) fn(*p);
  }
  template <typename F>
  void visit(F&& fn) const {
    for (const auto* p : {&token_embedding, &position_embedding, &emb_ln_gain, &emb_ln_bias}) fn(*p);
    for (const auto& b : encoder) b.visit(fn);
    for (const auto& b : syntax) b.visit(fn);
    vanilla_extra.visit(fn);
    for (const auto* p : {&concat_w, &concat_b, &span_w, &span_b, &choice_w, &choice_b}) fn(*p);
  }

  std::size_t parameter_count() const;
};

template <typename T>
struct EncodeTraces {
  AttentionTrace<T> vanilla;  // last vanilla layer (extra block in vanilla_only mode)
  AttentionTrace<T> syntax;   // last syntax-guided layer
};

template <typename T>
struct EncodedVars {
  using Var = typename GradientTape<T>::Var;
  Var h;        // base encoder output
  Var h_prime;  // syntax branch; invalid in vanilla_only mode
  Var h_bar;
};

/// H, H' and H-bar for one sequence. h_prime is empty when the syntax
/// branch was not evaluated.
template <typename T>
struct EncodedSequence {
  Tensor<T> h;
  Tensor<T> h_prime;
  Tensor<T> h_bar;
};

template <typename T>
EncodedVars<T> record_encode(GradientTape<T>& tape, const SgNetModel<T>& model, std::span<const std::size_t> tokens,
                             const SdoiMask& mask, EncodeTraces<T>* traces = nullptr);

template <typename T>
EncodedSequence<T> encode(const SgNetModel<T>& model, std::span<const std::size_t> tokens, const SdoiMask& mask,
                          EncodeTraces<T>* traces = nullptr);

/// alpha * h + (1 - alpha) * h_prime
template <typename T>
Tensor<T> aggregate(const Tensor<T>& h, const Tensor<T>& h_prime, double alpha);

template <typename T>
typename GradientTape<T>::Var record_aggregate(GradientTape<T>& tape, typename GradientTape<T>::Var h,
                                               typename GradientTape<T>::Var h_prime, double alpha);

// Checkpoints: a binary container of named matrices plus a JSON sidecar
// (<path>.json) holding the config and free-form metadata.
//
//   "SGNETCK1" | u32 version | u32 scalar bytes | u64 count |
//   count x (u32 name length | name | u64 rows | u64 cols | rows*cols scalars)
//
// All integers and scalars little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::string serialize_parameters(const SgNetModel<T>& model);

/// Overwrites model parameters from a blob. Names, order and shapes must match.
template <typename T>
void deserialize_parameters(std::string_view blob, SgNetModel<T>& model);

template <typename T>
void save_checkpoint(const std::string& path, const SgNetModel<T>& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct CheckpointHeader {
  SgNetConfig config;
  std::size_t scalar_bytes = 0;
  nlohmann::json metadata;
};

/// Reads the sidecar only.
CheckpointHeader read_checkpoint_header(const std::string& path);

template <typename T>
SgNetModel<T> load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace sgnet
