#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sgnet/sdoi.hpp"

using namespace sgnet;

namespace {

// the economy reflects the credit losses
DependencyTree economy() { return DependencyTree::from_heads({1, 2, kRoot, 5, 5, 2}); }

std::size_t depth(const DependencyTree& t, std::size_t i) {
  std::size_t d = 0;
  for (std::size_t cur = t.tokens[i].head; cur != kRoot; cur = t.tokens[cur].head) ++d;
  return d;
}

}  // namespace

TEST(AncestorSet, CreditExample) {
  const auto t = economy();
  EXPECT_EQ(ancestor_set(t, 4), (std::vector<std::size_t>{2, 5}));
  EXPECT_TRUE(ancestor_set(t, 2).empty());
  EXPECT_THROW(ancestor_set(t, 6), std::out_of_range);
}

TEST(AncestorSet, MatchesHeadWalkOnRandomTrees) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto t = oracle::random_tree(50, rng);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto want = oracle::walk_ancestors(t, i);
      EXPECT_EQ(ancestor_set(t, i), std::vector<std::size_t>(want.begin(), want.end()));
    }
  }
}

TEST(BuildSdoiMask, CreditRow) {
  const auto m = build_sdoi_mask(economy());
  for (std::size_t j : {2, 4, 5}) EXPECT_TRUE(m(4, j)) << j;
  for (std::size_t j : {0, 1, 3}) EXPECT_FALSE(m(4, j)) << j;
}

TEST(BuildSdoiMask, SingleTokenAndChain) {
  EXPECT_EQ(build_sdoi_mask(DependencyTree::from_heads({kRoot})), SdoiMask::all_ones(1));
  // a -> b -> c -> ROOT
  const auto m = build_sdoi_mask(DependencyTree::from_heads({1, 2, kRoot}));
  EXPECT_EQ(m.row_indices(0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(m.row_indices(1), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.row_indices(2), (std::vector<std::size_t>{2}));
}

TEST(BuildSdoiMask, RejectsInvalidTree) {
  EXPECT_THROW(build_sdoi_mask(DependencyTree::from_heads({1, 0})), TreeError);
}

TEST(BuildSdoiMask, Properties) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 1 + rep;
    const auto t = oracle::random_tree(n, rng);
    const auto m = build_sdoi_mask(t);
    const auto want = oracle::closure_mask(t);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(m(i, i));
      EXPECT_EQ(m.row_count(i), depth(t, i) + 1);
      if (t.is_root(i)) EXPECT_EQ(m.row_count(i), 1u);
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(m(i, j), want[i][j]) << i << "," << j;
        if (!m(i, j) || i == j) continue;
        for (std::size_t k = 0; k < n; ++k) {
          if (k != j && m(j, k)) EXPECT_TRUE(m(i, k));
        }
      }
    }
  }
}

TEST(ProjectMask, IdentityAlignment) {
  const auto m = build_sdoi_mask(economy());
  EXPECT_EQ(project_mask_to_wordpieces(m, WordPieceAlignment::identity(6)), m);
}

TEST(ProjectMask, OneWordThreePieces) {
  const auto m = build_sdoi_mask(DependencyTree::from_heads({kRoot}));
  WordPieceAlignment a;
  a.spans = {{0, 3}};
  EXPECT_EQ(project_mask_to_wordpieces(m, a), SdoiMask::all_ones(3));
}

TEST(ProjectMask, SplitCredit) {
  // credit (word 4) becomes pieces 4 and 5; losses moves to piece 6.
  WordPieceAlignment a;
  a.spans = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 6}, {6, 7}};
  const auto p = project_mask_to_wordpieces(build_sdoi_mask(economy()), a);
  ASSERT_EQ(p.size(), 7u);
  for (std::size_t piece : {4, 5}) EXPECT_EQ(p.row_indices(piece), (std::vector<std::size_t>{2, 4, 5, 6}));
  EXPECT_EQ(p.row_indices(6), (std::vector<std::size_t>{2, 6}));
  EXPECT_EQ(p.row_indices(3), (std::vector<std::size_t>{2, 3, 6}));
}

TEST(ProjectMask, Errors) {
  const auto m = build_sdoi_mask(economy());
  WordPieceAlignment gap;
  gap.spans = {{0, 1}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}};
  EXPECT_THROW(project_mask_to_wordpieces(m, gap), std::invalid_argument);
  EXPECT_THROW(project_mask_to_wordpieces(m, WordPieceAlignment::identity(5)), std::invalid_argument);
}

TEST(ComposeMask, SingleSentence) {
  const auto m = build_sdoi_mask(economy());
  SequenceLayout layout{std::vector<int>(6, 0)};
  const SdoiMask parts[] = {m};
  EXPECT_EQ(compose_sequence_mask(parts, layout), m);
}

TEST(ComposeMask, ClsSentenceSep) {
  const auto s1 = build_sdoi_mask(DependencyTree::from_heads({1, kRoot}));
  SequenceLayout layout{{SequenceLayout::kSpecial, 0, 0, SequenceLayout::kSpecial}};
  const SdoiMask parts[] = {s1};
  const auto m = compose_sequence_mask(parts, layout);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m.row_indices(0), std::vector<std::size_t>{0});
  EXPECT_EQ(m.row_indices(3), std::vector<std::size_t>{3});
  EXPECT_EQ(m.row_indices(1), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.row_indices(2), std::vector<std::size_t>{2});
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_FALSE(m(0, i));
    EXPECT_FALSE(m(i, 0));
    EXPECT_FALSE(m(i, 3));
  }
}

TEST(ComposeMask, TwoSentencesAreBlockDiagonal) {
  std::mt19937_64 rng(9);
  const auto a = oracle::random_tree(5, rng), b = oracle::random_tree(7, rng);
  const SdoiMask parts[] = {build_sdoi_mask(a), build_sdoi_mask(b)};
  // Interleaved on purpose: positions of one sentence need not be contiguous.
  SequenceLayout layout{{-1, 0, 0, 1, 1, 1, -1, 0, 0, 0, 1, 1, 1, 1, -1}};
  const auto m = compose_sequence_mask(parts, layout);
  std::vector<std::size_t> local(layout.size());
  std::size_t count[2] = {0, 0};
  for (std::size_t p = 0; p < layout.size(); ++p) {
    if (layout.slots[p] >= 0) local[p] = count[layout.slots[p]]++;
  }
  for (std::size_t p = 0; p < layout.size(); ++p) {
    for (std::size_t q = 0; q < layout.size(); ++q) {
      const int sp = layout.slots[p], sq = layout.slots[q];
      bool want = p == q;
      if (sp >= 0 && sp == sq) want = parts[sp](local[p], local[q]);
      EXPECT_EQ(m(p, q), want) << p << "," << q;
    }
  }
}

TEST(ComposeMask, Errors) {
  const SdoiMask parts[] = {SdoiMask::identity(2)};
  EXPECT_THROW(compose_sequence_mask(parts, SequenceLayout{{0, 0, 0}}), std::invalid_argument);
  EXPECT_THROW(compose_sequence_mask(parts, SequenceLayout{{0, 1}}), std::invalid_argument);
}

TEST(MaskSerialization, BinaryLayout) {
  SdoiMask m(3);
  m.set(0, 0);
  m.set(0, 2);
  m.set(2, 1);
  const auto bytes = encode_mask_binary(m);
  ASSERT_EQ(bytes.size(), 8u + 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 3u);
  for (int i = 1; i < 8; ++i) EXPECT_EQ(bytes[i], 0);
  // bits 0, 2 and 7 of the row-major stream
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0b10000101u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0u);
  EXPECT_EQ(decode_mask_binary(bytes), m);
  EXPECT_THROW(decode_mask_binary(bytes.substr(0, 9)), std::invalid_argument);
}

TEST(MaskSerialization, RoundTrips) {
  std::mt19937_64 rng(13);
  for (std::size_t n : {1, 2, 7, 8, 9, 33, 64}) {
    const auto m = build_sdoi_mask(oracle::random_tree(n, rng));
    EXPECT_EQ(decode_mask_binary(encode_mask_binary(m)), m);
    EXPECT_EQ(mask_from_json(mask_to_json(m)), m);
  }
  EXPECT_EQ(mask_to_json(SdoiMask::identity(2)), R"({"n":2,"rows":[[0],[1]]})");
}
