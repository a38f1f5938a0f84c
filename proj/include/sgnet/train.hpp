#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sgnet/model.hpp"
#include "sgnet/task.hpp"

namespace sgnet {

enum class Precision { kF32, kF64 };

std::string_view to_string(Precision p);
Precision precision_from_string(std::string_view s);

struct RunConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  /// When set, the run lasts epochs * ceil(count / batch_size) steps, capped
  /// by max_steps if that is nonzero. Otherwise max_steps alone.
  std::optional<std::size_t> epochs;
  std::size_t max_steps = 3000;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  Precision precision = Precision::kF32;
  SgNetConfig model;
  TaskConfig task;

  void validate() const;
  std::size_t total_steps(std::size_t instances) const;
  /// Scheduled rate for 1-based step s: linear warm-up, then linear decay.
  double learning_rate_at(std::size_t step, std::size_t total) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TrainOutcome {
  SgNetModel<T> model;
  std::size_t steps = 0;
  double final_loss = 0;
  double delta = 0;  // answerability threshold fitted on the training data
};

/// Adam-style training with decoupled weight decay. The model is seeded from
/// run.seed, so identical inputs give identical parameters and logs. One JSON
/// object per step is written to `log`.
template <typename T>
TrainOutcome<T> train(const RunConfig& run, const SyntheticTask& data, std::ostream* log = nullptr);

/// Span loss of one batch as used by training: the mean over instances of
/// half the start/end negative log-likelihood.
template <typename T>
typename GradientTape<T>::Var record_batch_loss(GradientTape<T>& tape, const SgNetModel<T>& model,
                                                std::span<const TaskInstance* const> batch, TaskKind kind,
                                                std::size_t* clamped = nullptr);

/// Final scores of the span head on every instance, in order.
template <typename T>
std::vector<double> final_scores(const SgNetModel<T>& model, const SyntheticTask& data);

/// Threshold maximising answerability accuracy on `data`.
template <typename T>
double fit_threshold(const SgNetModel<T>& model, const SyntheticTask& data);

/// JSON cannot hold infinities; they are written as the strings "inf"/"-inf".
nlohmann::json real_to_json(double v);
double real_from_json(const nlohmann::json& j);

/// Trains and saves `<checkpoint>` plus sidecar; the threshold and run config
/// go into the checkpoint metadata.
void run_training(const RunConfig& run, const SyntheticTask& data, const std::string& checkpoint,
                  std::ostream* log = nullptr);

}  // namespace sgnet
