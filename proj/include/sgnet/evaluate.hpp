#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgnet/heads.hpp"
#include "sgnet/model.hpp"
#include "sgnet/task.hpp"

namespace sgnet {

inline constexpr std::size_t kDefaultBuckets = 20;

struct Bucket {
  double lo = 0;  // passage length range covered
  double hi = 0;
  std::size_t count = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // empty when count == 0
};

/// Equal-width length ranges between the shortest and longest passage.
std::vector<Bucket> bucket_by_range(const std::vector<std::size_t>& lengths, const std::vector<bool>& correct,
                                    std::size_t buckets = kDefaultBuckets);

/// Contiguous groups of the length-sorted instances with sizes differing by
/// at most one.
std::vector<Bucket> bucket_by_count(const std::vector<std::size_t>& lengths, const std::vector<bool>& correct,
                                    std::size_t buckets = kDefaultBuckets);

struct InstancePrediction {
  std::uint64_t id = 0;
  SpanPrediction span;
  std::size_t choice = 0;
  bool correct = false;
};

struct EvalReport {
  TaskKind kind = TaskKind::kSpan;
  std::size_t count = 0;
  double exact_match = 0;              // span EM, or choice accuracy
  double answerability_accuracy = 0;   // span task only
  double delta = 0;
  std::vector<Bucket> range_buckets;
  std::vector<Bucket> count_buckets;
  std::vector<InstancePrediction> predictions;
};

/// A span prediction is an exact match when it is null for an unanswerable
/// instance, or the gold single-token span otherwise.
template <typename T>
EvalReport evaluate(const SgNetModel<T>& model, const SyntheticTask& data, double delta,
                    std::size_t buckets = kDefaultBuckets);

/// Loads a checkpoint with its stored threshold. Throws when the checkpoint
/// cannot encode the task (vocabulary or length limits).
EvalReport evaluate_checkpoint(const std::string& checkpoint, const SyntheticTask& data,
                               std::size_t buckets = kDefaultBuckets);

nlohmann::json report_to_json(const EvalReport& report);
/// scheme,bucket,lo,hi,count,accuracy; empty buckets leave accuracy blank.
std::string report_to_csv(const EvalReport& report);
/// One JSON object per instance: id, answerable, start, end, score_has,
/// score_na, final_score (span) or id, choice, correct (choice).
std::string predictions_to_jsonl(const EvalReport& report);

}  // namespace sgnet
