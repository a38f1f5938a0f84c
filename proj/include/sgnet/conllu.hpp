#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sgnet {

/// Head value of the sentence root. Never a valid token index.
inline constexpr std::size_t kRoot = static_cast<std::size_t>(-1);

struct Token {
  std::string form;
  std::size_t head = kRoot;  // 0-based index of the governing token, or kRoot
  std::string deprel;

  bool operator==(const Token&) const = default;
};

/// One sentence of basic dependencies. Indices are 0-based.
struct DependencyTree {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool is_root(std::size_t i) const { return tokens[i].head == kRoot; }
  bool operator==(const DependencyTree&) const = default;

  /// Builds a tree from a head array (kRoot marks the root); forms are "w<i>"
  /// and relations "dep".
  static DependencyTree from_heads(const std::vector<std::size_t>& heads);
};

enum class TreeViolation {
  kNoRoot,
  kMultipleRoots,
  kSelfHead,
  kDanglingHead,
  kCycle,
};

std::string_view to_string(TreeViolation v);

/// Returns the first violated invariant, or nullopt for a valid tree.
std::optional<TreeViolation> validate_tree(const DependencyTree& tree);

class TreeError : public std::runtime_error {
 public:
  explicit TreeError(TreeViolation v);
  TreeViolation violation() const { return violation_; }

 private:
  TreeViolation violation_;
};

/// Throws TreeError when `tree` violates an invariant.
void require_valid(const DependencyTree& tree);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parses CoNLL-U text. Multiword ranges ("3-4") and empty nodes ("5.1") are
/// skipped; HEAD 0 becomes kRoot. Every sentence is validated.
std::vector<DependencyTree> parse_conllu(std::string_view text);

/// Writes trees as CoNLL-U. Columns the tree does not carry are "_".
std::string to_conllu(const std::vector<DependencyTree>& trees);

/// Word index -> contiguous wordpiece range [lo, hi).
struct WordPieceAlignment {
  struct Range {
    std::size_t lo = 0;
    std::size_t hi = 0;
    bool operator==(const Range&) const = default;
  };
  std::vector<Range> spans;

  std::size_t word_count() const { return spans.size(); }
  /// Number of wordpieces covered; only meaningful when tiles() holds.
  std::size_t piece_count() const { return spans.empty() ? 0 : spans.back().hi; }
  /// True when ranges are non-empty, ordered and cover [0, piece_count()).
  bool tiles() const;

  static WordPieceAlignment identity(std::size_t n);
};

/// Parses a JSON array of [lo, hi] pairs. Throws std::invalid_argument when
/// the ranges do not tile.
WordPieceAlignment parse_alignment_json(std::string_view text);
std::string to_alignment_json(const WordPieceAlignment& align);

}  // namespace sgnet
