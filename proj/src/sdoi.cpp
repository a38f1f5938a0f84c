#include "sgnet/sdoi.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace sgnet {

SdoiMask SdoiMask::identity(std::size_t n) {
  SdoiMask m(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i);
  return m;
}

SdoiMask SdoiMask::all_ones(std::size_t n) {
  SdoiMask m(n);
  std::fill(m.bits_.begin(), m.bits_.end(), std::uint8_t{1});
  return m;
}

std::size_t SdoiMask::row_count(std::size_t i) const {
  return static_cast<std::size_t>(
      std::count(bits_.begin() + static_cast<std::ptrdiff_t>(i * n_),
                 bits_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_), std::uint8_t{1}));
}

std::vector<std::size_t> SdoiMask::row_indices(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j) {
    if ((*this)(i, j)) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> ancestor_set(const DependencyTree& tree, std::size_t i) {
  if (i >= tree.size()) throw std::out_of_range("ancestor_set: token index out of range");
  std::vector<std::size_t> out;
  // A valid tree reaches the root in fewer than n hops.
  for (std::size_t cur = tree.tokens[i].head; cur != kRoot; cur = tree.tokens[cur].head) {
    if (out.size() >= tree.size()) throw TreeError(TreeViolation::kCycle);
    out.push_back(cur);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SdoiMask build_sdoi_mask(const DependencyTree& tree) {
  require_valid(tree);
  const std::size_t n = tree.size();
  SdoiMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.set(i, i);
    for (std::size_t cur = tree.tokens[i].head; cur != kRoot; cur = tree.tokens[cur].head) m.set(i, cur);
  }
  return m;
}

SdoiMask project_mask_to_wordpieces(const SdoiMask& mask, const WordPieceAlignment& align) {
  if (!align.tiles()) throw std::invalid_argument("alignment does not tile the wordpiece sequence");
  if (align.word_count() != mask.size()) {
    throw std::invalid_argument("alignment word count " + std::to_string(align.word_count()) +
                                " does not match mask size " + std::to_string(mask.size()));
  }
  SdoiMask out(align.piece_count());
  for (std::size_t wi = 0; wi < mask.size(); ++wi) {
    for (std::size_t wj = 0; wj < mask.size(); ++wj) {
      if (!mask(wi, wj)) continue;
      const auto& ri = align.spans[wi];
      const auto& rj = align.spans[wj];
      for (std::size_t p = ri.lo; p < ri.hi; ++p) {
        for (std::size_t q = rj.lo; q < rj.hi; ++q) out.set(p, q);
      }
    }
  }
  return out;
}

SdoiMask compose_sequence_mask(std::span<const SdoiMask> sentence_masks, const SequenceLayout& layout) {
  const std::size_t n = layout.size();
  std::vector<std::size_t> counts(sentence_masks.size(), 0);
  // global position of each sentence-local index
  std::vector<std::vector<std::size_t>> where(sentence_masks.size());
  for (std::size_t p = 0; p < n; ++p) {
    const int s = layout.slots[p];
    if (s == SequenceLayout::kSpecial) continue;
    if (s < 0 || static_cast<std::size_t>(s) >= sentence_masks.size()) {
      throw std::invalid_argument("layout references unknown sentence " + std::to_string(s));
    }
    where[static_cast<std::size_t>(s)].push_back(p);
  }
  for (std::size_t s = 0; s < sentence_masks.size(); ++s) {
    if (where[s].size() != sentence_masks[s].size()) {
      throw std::invalid_argument("layout assigns " + std::to_string(where[s].size()) + " positions to sentence " +
                                  std::to_string(s) + " of length " + std::to_string(sentence_masks[s].size()));
    }
  }
  SdoiMask out(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (layout.slots[p] == SequenceLayout::kSpecial) out.set(p, p);
  }
  for (std::size_t s = 0; s < sentence_masks.size(); ++s) {
    const auto& m = sentence_masks[s];
    const auto& pos = where[s];
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) {
        if (m(i, j)) out.set(pos[i], pos[j]);
      }
    }
  }
  return out;
}

std::string encode_mask_binary(const SdoiMask& mask) {
  const std::uint64_t n = mask.size();
  std::string out(8 + (n * n + 7) / 8, '\0');
  for (int b = 0; b < 8; ++b) out[static_cast<std::size_t>(b)] = static_cast<char>((n >> (8 * b)) & 0xffu);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j, ++k) {
      if (mask(i, j)) {
        auto& byte = out[8 + k / 8];
        byte = static_cast<char>(static_cast<unsigned char>(byte) | (1u << (k % 8)));
      }
    }
  }
  return out;
}

SdoiMask decode_mask_binary(std::string_view bytes) {
  if (bytes.size() < 8) throw std::invalid_argument("mask blob shorter than its header");
  std::uint64_t n = 0;
  for (int b = 0; b < 8; ++b) {
    n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(b)])) << (8 * b);
  }
  if (n > (1u << 20) || bytes.size() != 8 + (n * n + 7) / 8) {
    throw std::invalid_argument("mask blob size does not match header n=" + std::to_string(n));
  }
  SdoiMask m(static_cast<std::size_t>(n));
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j, ++k) {
      const auto byte = static_cast<unsigned char>(bytes[8 + k / 8]);
      if (byte & (1u << (k % 8))) m.set(i, j);
    }
  }
  return m;
}

std::string mask_to_json(const SdoiMask& mask) {
  nlohmann::json doc;
  doc["n"] = mask.size();
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < mask.size(); ++i) rows.push_back(mask.row_indices(i));
  doc["rows"] = std::move(rows);
  return doc.dump();
}

SdoiMask mask_from_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  const auto n = doc.at("n").get<std::size_t>();
  const auto& rows = doc.at("rows");
  if (rows.size() != n) throw std::invalid_argument("mask JSON has wrong number of rows");
  SdoiMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : rows[i]) {
      const auto j = c.get<std::size_t>();
      if (j >= n) throw std::invalid_argument("mask JSON column out of range");
      m.set(i, j);
    }
  }
  return m;
}

}  // namespace sgnet
