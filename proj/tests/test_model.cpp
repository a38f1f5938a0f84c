#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sgnet/model.hpp"

using namespace sgnet;
using T = double;

namespace {

SgNetConfig small_config(AggregationMode mode, double alpha = 0.5) {
  SgNetConfig c;
  c.aggregation = mode;
  c.alpha = alpha;
  c.vocab_size = 12;
  c.max_positions = 16;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 12;
  c.seed = 7;
  return c;
}

std::vector<std::size_t> tokens(std::size_t n) {
  std::vector<std::size_t> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = (3 * i + 1) % 12;
  return t;
}

SdoiMask mask_for(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return build_sdoi_mask(oracle::random_tree(n, rng));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("sgnet_model_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

double frobenius(const Tensor<T>& a) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * a[k];
  return std::sqrt(s);
}

// Embedding layer and encoder stack, without the tape.
Tensor<T> base_encoder(const SgNetModel<T>& m, const std::vector<std::size_t>& tok) {
  Tensor<T> x(tok.size(), m.config.d_model);
  for (std::size_t i = 0; i < tok.size(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c)
      x(i, c) = m.token_embedding.value(tok[i], c) + m.position_embedding.value(i, c);
  x = layer_norm(x, m.emb_ln_gain.value, m.emb_ln_bias.value);
  for (const auto& b : m.encoder) x = vanilla_attention_block(x, b);
  return x;
}

}  // namespace

TEST(SgNetConfig, Validation) {
  auto c = small_config(AggregationMode::kDual);
  EXPECT_NO_THROW(c.validate());
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(AggregationMode::kDual);
  c.heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(aggregation_mode_from_string("concatenation"), AggregationMode::kConcatenation);
  EXPECT_THROW(aggregation_mode_from_string("bi_attention"), std::invalid_argument);
  EXPECT_EQ(mask_mode_from_string(to_string(MaskMode::kLiteral)), MaskMode::kLiteral);
}

TEST(SgNetConfig, JsonRoundTrip) {
  auto c = small_config(AggregationMode::kSyntaxOnly, 0.25);
  c.mask_mode = MaskMode::kLiteral;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<SgNetConfig>(), c);
  EXPECT_EQ(j.at("aggregation"), "syntax_only");
}

TEST(Aggregate, Examples) {
  EXPECT_EQ(aggregate(Tensor<T>{{2}}, Tensor<T>{{4}}, 0.5), (Tensor<T>{{3}}));
  std::mt19937_64 rng(1);
  const auto h = oracle::random_tensor<T>(3, 4, rng), hp = oracle::random_tensor<T>(3, 4, rng);
  EXPECT_EQ(aggregate(h, hp, 0.0), hp);
  EXPECT_EQ(aggregate(h, hp, 1.0), h);
  EXPECT_THROW(aggregate(h, Tensor<T>(3, 5), 0.5), ShapeError);
  EXPECT_THROW(aggregate(h, hp, -0.1), std::invalid_argument);
}

TEST(Aggregate, LinearityFixedPointAndLipschitz) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = oracle::random_tensor<T>(4, 5, rng), b = oracle::random_tensor<T>(4, 5, rng);
    const auto hp = oracle::random_tensor<T>(4, 5, rng);
    const double alpha = u(rng), c1 = u(rng) * 3 - 1.5, c2 = u(rng) * 3 - 1.5;
    Tensor<T> lin(4, 5);
    for (std::size_t k = 0; k < lin.size(); ++k) lin[k] = c1 * a[k] + c2 * b[k];
    // linear in H when H' is scaled along with it
    Tensor<T> lin_hp(4, 5);
    for (std::size_t k = 0; k < lin.size(); ++k) lin_hp[k] = (c1 + c2) * hp[k];
    const auto lhs = aggregate(lin, lin_hp, alpha);
    const auto ra = aggregate(a, hp, alpha), rb = aggregate(b, hp, alpha);
    for (std::size_t k = 0; k < lhs.size(); ++k) EXPECT_NEAR(lhs[k], c1 * ra[k] + c2 * rb[k], 1e-12);

    EXPECT_LT(max_abs_diff(aggregate(a, a, alpha), a), 1e-12);

    const double a2 = u(rng);
    Tensor<T> diff(4, 5), gap(4, 5);
    const auto x1 = aggregate(a, hp, alpha), x2 = aggregate(a, hp, a2);
    for (std::size_t k = 0; k < diff.size(); ++k) {
      diff[k] = x1[k] - x2[k];
      gap[k] = a[k] - hp[k];
    }
    EXPECT_LE(frobenius(diff), std::abs(alpha - a2) * frobenius(gap) + 1e-12);
  }
}

TEST(SgNetModel, InitIsDeterministicAndNamed) {
  const auto c = small_config(AggregationMode::kDual);
  const auto a = SgNetModel<T>::init(c), b = SgNetModel<T>::init(c);
  EXPECT_EQ(serialize_parameters(a), serialize_parameters(b));
  auto c2 = c;
  c2.seed = 8;
  EXPECT_NE(serialize_parameters(a), serialize_parameters(SgNetModel<T>::init(c2)));
  EXPECT_EQ(a.encoder.size(), 2u);
  EXPECT_EQ(a.syntax.size(), 1u);
  std::set<std::string> names;
  std::size_t count = 0;
  a.visit([&](const Parameter<T>& p) {
    names.insert(p.name);
    count += p.value.size();
    EXPECT_TRUE(p.value.all_finite());
  });
  EXPECT_EQ(count, a.parameter_count());
  std::size_t listed = 0;
  a.visit([&](const Parameter<T>&) { ++listed; });
  EXPECT_EQ(names.size(), listed);
}

TEST(Encode, ShapesInEveryMode) {
  for (auto mode : {AggregationMode::kDual, AggregationMode::kVanillaOnly, AggregationMode::kSyntaxOnly,
                    AggregationMode::kConcatenation}) {
    const auto m = SgNetModel<T>::init(small_config(mode));
    const auto tok = tokens(6);
    const auto out = encode(m, tok, mask_for(6, 3));
    EXPECT_EQ(out.h.rows(), 6u);
    EXPECT_EQ(out.h.cols(), 8u);
    EXPECT_EQ(out.h_bar.rows(), 6u);
    EXPECT_EQ(out.h_bar.cols(), 8u);
    if (mode == AggregationMode::kVanillaOnly) {
      EXPECT_TRUE(out.h_prime.empty());
    } else {
      EXPECT_EQ(out.h_prime.rows(), 6u);
      EXPECT_EQ(out.h_prime.cols(), 8u);
    }
  }
}

TEST(Encode, BaseEncoderMatchesManualStack) {
  const auto m = SgNetModel<T>::init(small_config(AggregationMode::kDual));
  const auto tok = tokens(5);
  EXPECT_LT(max_abs_diff(encode(m, tok, mask_for(5, 4)).h, base_encoder(m, tok)), 1e-12);
}

TEST(Encode, VanillaOnlyUsesExtraBlock) {
  const auto m = SgNetModel<T>::init(small_config(AggregationMode::kVanillaOnly));
  const auto tok = tokens(5);
  EncodeTraces<T> tr;
  const auto out = encode(m, tok, mask_for(5, 5), &tr);
  EXPECT_LT(max_abs_diff(out.h_bar, vanilla_attention_block(base_encoder(m, tok), m.vanilla_extra)), 1e-12);
  EXPECT_TRUE(tr.syntax.heads.empty());
  EXPECT_EQ(tr.vanilla.heads.size(), 2u);
}

TEST(Encode, AlphaEndpointsAndMidpoint) {
  const auto tok = tokens(5);
  const auto mask = mask_for(5, 6);
  const auto m1 = SgNetModel<T>::init(small_config(AggregationMode::kDual, 1.0));
  const auto o1 = encode(m1, tok, mask);
  EXPECT_LT(max_abs_diff(o1.h_bar, o1.h), 1e-7);

  const auto m0 = SgNetModel<T>::init(small_config(AggregationMode::kDual, 0.0));
  const auto o0 = encode(m0, tok, mask);
  EXPECT_LT(max_abs_diff(o0.h_bar, o0.h_prime), 1e-7);

  const auto m5 = SgNetModel<T>::init(small_config(AggregationMode::kDual, 0.5));
  const auto o5 = encode(m5, tok, mask);
  const auto h = base_encoder(m5, tok);
  const auto hp = sdoi_attention_block(h, m5.syntax[0], mask);
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_NEAR(o5.h_bar[k], 0.5 * h[k] + 0.5 * hp[k], 1e-12);
}

TEST(Encode, SyntaxOnlyAndConcatenation) {
  const auto tok = tokens(4);
  const auto mask = mask_for(4, 7);
  const auto ms = SgNetModel<T>::init(small_config(AggregationMode::kSyntaxOnly));
  const auto os = encode(ms, tok, mask);
  EXPECT_EQ(os.h_bar, os.h_prime);

  const auto mc = SgNetModel<T>::init(small_config(AggregationMode::kConcatenation));
  const auto oc = encode(mc, tok, mask);
  Tensor<T> cat(4, 16);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 8; ++c) {
      cat(i, c) = oc.h(i, c);
      cat(i, 8 + c) = oc.h_prime(i, c);
    }
  EXPECT_LT(max_abs_diff(oc.h_bar, linear(cat, mc.concat_w.value, mc.concat_b.value)), 1e-12);
}

// All-ones mask and the syntax block sharing the extra block's weights: the
// syntax branch is then the vanilla-only output, and so is dual at alpha 0.
TEST(Encode, DegenerateMaskWithSharedParameters) {
  const auto tok = tokens(6);
  const auto ones = SdoiMask::all_ones(6);
  const auto vo = SgNetModel<T>::init(small_config(AggregationMode::kVanillaOnly));
  const auto want = encode(vo, tok, ones).h_bar;
  for (double alpha : {0.0, 0.5}) {
    auto dual = vo;
    dual.config.aggregation = AggregationMode::kDual;
    dual.config.alpha = alpha;
    dual.syntax[0] = vo.vanilla_extra;
    const auto out = encode(dual, tok, ones);
    EXPECT_LT(max_abs_diff(out.h_prime, want), 1e-6);
    if (alpha == 0.0) EXPECT_LT(max_abs_diff(out.h_bar, want), 1e-6);
  }
}

TEST(Encode, SyntaxBranchIgnoresNonAncestors) {
  // token 3 is a leaf, so no other row can see it
  const auto m = SgNetModel<T>::init(small_config(AggregationMode::kSyntaxOnly));
  std::mt19937_64 rng(8);
  auto h = oracle::random_tensor<T>(4, 8, rng);
  const auto chain = build_sdoi_mask(DependencyTree::from_heads({1, kRoot, 1, 2}));
  const auto before = sdoi_attention_block(h, m.syntax[0], chain);
  for (std::size_t c = 0; c < 8; ++c) h(3, c) += 5.0;
  const auto after = sdoi_attention_block(h, m.syntax[0], chain);
  for (std::size_t i : {0, 1, 2})
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(before(i, c), after(i, c));
}

TEST(Encode, Errors) {
  const auto m = SgNetModel<T>::init(small_config(AggregationMode::kDual));
  const auto tok = tokens(4);
  EXPECT_THROW(encode(m, tok, SdoiMask::identity(3)), ShapeError);
  const std::vector<std::size_t> bad{0, 1, 12};
  EXPECT_THROW(encode(m, bad, SdoiMask::identity(3)), std::out_of_range);
  EXPECT_THROW(encode(m, tokens(17), SdoiMask::identity(17)), std::invalid_argument);
  EXPECT_THROW(encode(m, std::vector<std::size_t>{}, SdoiMask::identity(0)), std::invalid_argument);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto path = temp_path("round.bin");
  auto m = SgNetModel<T>::init(small_config(AggregationMode::kConcatenation, 0.3));
  m.span_b.value(0, 1) = std::nextafter(0.1, 1.0);
  save_checkpoint(path, m, {{"note", "x"}});
  nlohmann::json meta;
  const auto back = load_checkpoint<T>(path, &meta);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(meta.at("note"), "x");
  EXPECT_EQ(serialize_parameters(back), serialize_parameters(m));
  const auto first = slurp(path);
  save_checkpoint(path, back, {{"note", "x"}});
  EXPECT_EQ(slurp(path), first);
  EXPECT_EQ(first.substr(0, 8), "SGNETCK1");
  EXPECT_EQ(read_checkpoint_header(path).scalar_bytes, sizeof(T));

  const auto one = std::vector<std::size_t>{1, 2, 3};
  const auto mask = SdoiMask::identity(3);
  EXPECT_EQ(encode(back, one, mask).h_bar, encode(m, one, mask).h_bar);
}

TEST(Checkpoint, FloatModelsRoundTrip) {
  const auto path = temp_path("f32.bin");
  const auto m = SgNetModel<float>::init(small_config(AggregationMode::kDual));
  save_checkpoint(path, m);
  EXPECT_EQ(serialize_parameters(load_checkpoint<float>(path)), serialize_parameters(m));
  EXPECT_THROW(load_checkpoint<double>(path), std::runtime_error);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto path = temp_path("bad.bin");
  const auto m = SgNetModel<T>::init(small_config(AggregationMode::kDual));
  save_checkpoint(path, m);
  const auto blob = slurp(path);

  auto model = m;
  EXPECT_THROW(deserialize_parameters<T>(blob.substr(0, blob.size() - 3), model), std::runtime_error);
  EXPECT_THROW(deserialize_parameters<T>(blob + "z", model), std::runtime_error);
  auto magic = blob;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_parameters<T>(magic, model), std::runtime_error);

  auto other = SgNetModel<T>::init(small_config(AggregationMode::kVanillaOnly));
  other.encoder.pop_back();
  EXPECT_THROW(deserialize_parameters<T>(blob, other), std::runtime_error);
  EXPECT_THROW(load_checkpoint<T>(temp_path("missing.bin")), std::runtime_error);
}
