#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgnet/conllu.hpp"

namespace sgnet {

/// n x n boolean attention mask. Row i is the attending token, a set bit at
/// column j means j lies in the syntactic dependency of interest of i.
class SdoiMask {
 public:
  SdoiMask() = default;
  explicit SdoiMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  static SdoiMask identity(std::size_t n);
  static SdoiMask all_ones(std::size_t n);

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value = true) { bits_[i * n_ + j] = value ? 1 : 0; }

  std::size_t row_count(std::size_t i) const;
  std::vector<std::size_t> row_indices(std::size_t i) const;

  bool operator==(const SdoiMask&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Strict ancestors of token i, ascending by index. ROOT and i itself are
/// excluded. Requires a valid tree.
std::vector<std::size_t> ancestor_set(const DependencyTree& tree, std::size_t i);

/// M[i,j] = 1 iff j is an ancestor of i or j == i.
SdoiMask build_sdoi_mask(const DependencyTree& tree);

/// Expands a word-level mask to wordpieces: every piece of word w inherits
/// row w and targets every piece of each word that row allows.
SdoiMask project_mask_to_wordpieces(const SdoiMask& mask, const WordPieceAlignment& align);

/// Assignment of each sequence position to a sentence or a special token.
struct SequenceLayout {
  static constexpr int kSpecial = -1;
  /// slot[p] is the sentence index for position p, or kSpecial. Positions of
  /// one sentence are taken in order.
  std::vector<int> slots;

  std::size_t size() const { return slots.size(); }
};

/// Places the sentence masks block-diagonally according to `layout`. Special
/// positions attend only to themselves and no sentence crosses into another.
SdoiMask compose_sequence_mask(std::span<const SdoiMask> sentence_masks, const SequenceLayout& layout);

/// Row-major bit-packed mask: 8-byte little-endian n, then ceil(n*n/8) bytes,
/// bit k of the stream stored in byte k/8 at bit position k%8.
std::string encode_mask_binary(const SdoiMask& mask);
SdoiMask decode_mask_binary(std::string_view bytes);

/// {"n": int, "rows": [[column indices], ...]}
std::string mask_to_json(const SdoiMask& mask);
SdoiMask mask_from_json(std::string_view text);

}  // namespace sgnet
