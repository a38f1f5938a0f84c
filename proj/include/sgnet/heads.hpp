#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "sgnet/tape.hpp"
#include "sgnet/tensor.hpp"

namespace sgnet {

/// Start/end probability vectors over sequence positions. Position 0 is the
/// null (no-answer) slot.
struct SpanDistributions {
  std::vector<double> start;
  std::vector<double> end;

  std::size_t size() const { return start.size(); }
};

struct SpanPrediction {
  std::size_t start = 0;
  std::size_t end = 0;
  double score_has = 0;
  double score_na = 0;
  double final_score = 0;  // score_has - score_na
  bool answerable = false;
};

/// Clamp for log-probabilities of the gold index.
inline constexpr double kProbabilityFloor = 1e-12;

/// Softmax over positions of H_bar * w + b, column 0 start and column 1 end.
template <typename T>
SpanDistributions span_distributions(const Tensor<T>& h_bar, const Tensor<T>& w, const Tensor<T>& b);

/// Row 0 = log start distribution, row 1 = log end distribution (2 x n).
template <typename T>
typename GradientTape<T>::Var record_span_log_probs(GradientTape<T>& tape, typename GradientTape<T>::Var h_bar,
                                                    const Parameter<T>& w, const Parameter<T>& b);

struct SpanLoss {
  double value = 0;
  bool clamped = false;  // a gold probability fell below kProbabilityFloor
};

/// -(log s[y_s] + log e[y_e])
SpanLoss span_loss(const SpanDistributions& dist, std::size_t y_start, std::size_t y_end);

struct BestSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = -std::numeric_limits<double>::infinity();
};

/// argmax of s[k] + e[l] over first <= k <= l < n in O(n). Returns
/// (0, 0, -inf) when no position is eligible. Ties keep the earliest pair.
BestSpan best_span(const SpanDistributions& dist, std::size_t first = 1);

/// s[0] + e[0]
double na_score(const SpanDistributions& dist);

/// The threshold maximising accuracy of (score > delta) against labels.
/// Candidates are -inf, +inf and midpoints of adjacent distinct sorted
/// scores; ties go to the smallest candidate. O(n log n).
double search_threshold(std::span<const double> final_scores, std::span<const bool> answerable);

/// Fraction of (score > delta) == label.
double threshold_accuracy(std::span<const double> final_scores, std::span<const bool> answerable, double delta);

/// Answerable iff score_has - score_na > delta; null answers are (0, 0).
SpanPrediction predict_answer(const SpanDistributions& dist, double delta);

/// Softmax over candidates of h_bar[0] * w + b.
template <typename T>
std::vector<double> choice_predict(std::span<const Tensor<T>> h_bar_per_choice, const Tensor<T>& w,
                                   const Tensor<T>& b);

/// 1 x C log-probabilities over candidates.
template <typename T>
typename GradientTape<T>::Var record_choice_log_probs(GradientTape<T>& tape,
                                                      std::span<const typename GradientTape<T>::Var> h_bars,
                                                      const Parameter<T>& w, const Parameter<T>& b);

/// Mean of -log p[y] over a batch, clamped at log(kProbabilityFloor).
double choice_loss(std::span<const std::vector<double>> probabilities, std::span<const std::size_t> gold);

}  // namespace sgnet
