#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgnet/conllu.hpp"
#include "sgnet/sdoi.hpp"

namespace sgnet {

// Reserved vocabulary. Question tokens K_1..K_max_k follow at kFirstKToken,
// passage words fill the rest of the vocabulary.
inline constexpr std::size_t kClsToken = 0;
inline constexpr std::size_t kSepToken = 1;
inline constexpr std::size_t kPadToken = 2;
inline constexpr std::size_t kMaskToken = 3;
inline constexpr std::size_t kFirstKToken = 4;

enum class TreeShape { kRandom, kStar, kChain };

/// Which relative of the marked token holds the answer.
enum class QueryDirection {
  kAncestor,    // the k-th ancestor of the marked token
  kDescendant,  // the token whose k-th ancestor is the marked token
};

enum class TaskKind { kSpan, kChoice };

std::string_view to_string(TreeShape s);
std::string_view to_string(QueryDirection d);
std::string_view to_string(TaskKind k);
QueryDirection query_direction_from_string(std::string_view s);
TaskKind task_kind_from_string(std::string_view s);

struct TaskConfig {
  TaskKind kind = TaskKind::kSpan;
  std::size_t count = 2000;
  std::size_t min_len = 8;  // passage words
  std::size_t max_len = 24;
  std::size_t vocab_size = 64;
  std::size_t max_depth = 4;
  std::size_t max_k = 3;
  double unanswerable_rate = 0.2;
  QueryDirection direction = QueryDirection::kDescendant;
  /// Relative weights of random / star / chain trees.
  std::array<double, 3> shape_weights{1.0, 0.0, 0.0};
  std::size_t choices = 4;

  std::size_t first_word_token() const { return kFirstKToken + max_k; }

  /// Throws std::invalid_argument when no instance could satisfy the ranges.
  void validate() const;

  bool operator==(const TaskConfig&) const = default;
};

void to_json(nlohmann::json& j, const TaskConfig& c);
void from_json(const nlohmann::json& j, TaskConfig& c);

struct TaskInstance {
  std::uint64_t id = 0;
  std::vector<std::size_t> words;  // passage token ids, kMaskToken at `marked`
  DependencyTree tree;
  std::size_t marked = 0;
  std::size_t k = 1;
  bool answerable = true;
  std::size_t answer = 0;  // passage index, meaningful when answerable
  std::vector<std::size_t> choices;  // choice task: candidate word ids
  std::size_t gold_choice = 0;

  bool operator==(const TaskInstance&) const = default;
};

struct SyntheticTask {
  TaskConfig config;
  std::vector<TaskInstance> instances;
};

/// Fills answer/answerable for a marked token and k under a direction.
/// Descendant queries are answerable when exactly one token has the marked
/// token as its k-th ancestor.
void resolve_query(TaskInstance& inst, QueryDirection direction);

SyntheticTask gen_ancestor_copy_task(const TaskConfig& config, std::uint64_t seed);
SyntheticTask gen_choice_task(const TaskConfig& config, std::uint64_t seed);
SyntheticTask generate_task(const TaskConfig& config, std::uint64_t seed);

/// Header line with the config, then one instance per line.
std::string to_jsonl(const SyntheticTask& task);
SyntheticTask task_from_jsonl(std::string_view text);

/// One model input: token ids, its composed mask and span targets.
struct EncodedInput {
  std::vector<std::size_t> tokens;
  SdoiMask mask;
  std::size_t passage_offset = 0;
  std::size_t gold_start = 0;  // 0 = null slot
  std::size_t gold_end = 0;
};

/// [CLS] K_k [SEP] passage [SEP]. The question and the passage are separate
/// sentences; specials attend to themselves.
EncodedInput encode_span_input(const TaskInstance& inst);

/// [CLS] K_k C [SEP] passage [SEP] for every candidate C.
std::vector<EncodedInput> encode_choice_inputs(const TaskInstance& inst);

/// Depth of every token of a valid tree (root = 0).
std::vector<std::size_t> tree_depths(const DependencyTree& tree);

}  // namespace sgnet
