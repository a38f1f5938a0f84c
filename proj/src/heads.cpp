#include "sgnet/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sgnet {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

double clamped_log(double p, bool& clamped) {
  if (p < kProbabilityFloor) {
    clamped = true;
    return std::log(kProbabilityFloor);
  }
  return std::log(p);
}

}  // namespace

template <typename T>
SpanDistributions span_distributions(const Tensor<T>& h_bar, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t n = h_bar.rows();
  if (n == 0) throw std::invalid_argument("span_distributions: empty sequence");
  expect_shape(w, h_bar.cols(), 2, "span weight");
  expect_shape(b, 1, 2, "span bias");
  std::vector<double> ls(n), le(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a = b(0, 0), c = b(0, 1);
    for (std::size_t k = 0; k < h_bar.cols(); ++k) {
      a += static_cast<double>(h_bar(i, k)) * w(k, 0);
      c += static_cast<double>(h_bar(i, k)) * w(k, 1);
    }
    ls[i] = a;
    le[i] = c;
  }
  return SpanDistributions{softmax(ls), softmax(le)};
}

template <typename T>
typename GradientTape<T>::Var record_span_log_probs(GradientTape<T>& tape, typename GradientTape<T>::Var h_bar,
                                                    const Parameter<T>& w, const Parameter<T>& b) {
  auto logits = tape.linear(h_bar, tape.parameter(w), tape.parameter(b));
  return tape.log_softmax_rows(tape.transpose(logits));
}

SpanLoss span_loss(const SpanDistributions& dist, std::size_t y_start, std::size_t y_end) {
  if (y_start >= dist.start.size() || y_end >= dist.end.size()) {
    throw std::out_of_range("span_loss: gold index out of range");
  }
  SpanLoss out;
  out.value = -(clamped_log(dist.start[y_start], out.clamped) + clamped_log(dist.end[y_end], out.clamped));
  return out;
}

BestSpan best_span(const SpanDistributions& dist, std::size_t first) {
  BestSpan best;
  const std::size_t n = std::min(dist.start.size(), dist.end.size());
  std::size_t arg_s = first;
  double max_s = -std::numeric_limits<double>::infinity();
  for (std::size_t l = first; l < n; ++l) {
    if (dist.start[l] > max_s) {
      max_s = dist.start[l];
      arg_s = l;
    }
    const double score = max_s + dist.end[l];
    if (score > best.score) best = BestSpan{arg_s, l, score};
  }
  return best;
}

double na_score(const SpanDistributions& dist) {
  if (dist.size() == 0) throw std::invalid_argument("na_score: empty distributions");
  return dist.start[0] + dist.end[0];
}

double threshold_accuracy(std::span<const double> final_scores, std::span<const bool> answerable, double delta) {
  if (final_scores.size() != answerable.size() || final_scores.empty()) {
    throw std::invalid_argument("threshold_accuracy: need nonempty paired lists");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < final_scores.size(); ++i) correct += (final_scores[i] > delta) == answerable[i];
  return static_cast<double>(correct) / static_cast<double>(final_scores.size());
}

double search_threshold(std::span<const double> final_scores, std::span<const bool> answerable) {
  if (final_scores.size() != answerable.size()) throw std::invalid_argument("search_threshold: length mismatch");
  if (final_scores.empty()) throw std::invalid_argument("search_threshold: empty input");
  const std::size_t n = final_scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return final_scores[a] < final_scores[b]; });

  // Sweep delta upwards. At -inf everything is predicted answerable.
  std::ptrdiff_t correct = std::count(answerable.begin(), answerable.end(), true);
  std::ptrdiff_t best_correct = correct;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    const double v = final_scores[order[i]];
    for (; j < n && final_scores[order[j]] == v; ++j) correct += answerable[order[j]] ? -1 : 1;
    const double candidate =
        j < n ? v + (final_scores[order[j]] - v) / 2 : std::numeric_limits<double>::infinity();
    if (correct > best_correct) {
      best_correct = correct;
      best = candidate;
    }
    i = j;
  }
  return best;
}

SpanPrediction predict_answer(const SpanDistributions& dist, double delta) {
  SpanPrediction p;
  const auto span = best_span(dist);
  p.score_has = span.score;
  p.score_na = na_score(dist);
  p.final_score = p.score_has - p.score_na;
  p.answerable = p.final_score > delta;
  if (p.answerable) {
    p.start = span.start;
    p.end = span.end;
  }
  return p;
}

template <typename T>
std::vector<double> choice_predict(std::span<const Tensor<T>> h_bar_per_choice, const Tensor<T>& w,
                                   const Tensor<T>& b) {
  if (h_bar_per_choice.size() < 2) throw std::invalid_argument("choice_predict: need at least 2 candidates");
  const std::size_t d = h_bar_per_choice.front().cols();
  expect_shape(w, d, 1, "choice weight");
  expect_shape(b, 1, 1, "choice bias");
  std::vector<double> logits;
  for (const auto& h : h_bar_per_choice) {
    if (h.rows() == 0 || h.cols() != d) throw ShapeError("choice_predict: candidate width mismatch");
    double z = b(0, 0);
    for (std::size_t k = 0; k < d; ++k) z += static_cast<double>(h(0, k)) * w(k, 0);
    logits.push_back(z);
  }
  return softmax(logits);
}

template <typename T>
typename GradientTape<T>::Var record_choice_log_probs(GradientTape<T>& tape,
                                                      std::span<const typename GradientTape<T>::Var> h_bars,
                                                      const Parameter<T>& w, const Parameter<T>& b) {
  if (h_bars.size() < 2) throw std::invalid_argument("choice head: need at least 2 candidates");
  std::vector<typename GradientTape<T>::Var> logits;
  for (auto h : h_bars) {
    logits.push_back(tape.linear(tape.slice_rows(h, 0, 1), tape.parameter(w), tape.parameter(b)));
  }
  return tape.log_softmax_rows(tape.concat_cols(logits));
}

double choice_loss(std::span<const std::vector<double>> probabilities, std::span<const std::size_t> gold) {
  if (probabilities.size() != gold.size() || gold.empty()) {
    throw std::invalid_argument("choice_loss: need nonempty paired batch");
  }
  double total = 0;
  bool clamped = false;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= probabilities[i].size()) throw std::out_of_range("choice_loss: gold index out of range");
    total -= clamped_log(probabilities[i][gold[i]], clamped);
  }
  return total / static_cast<double>(gold.size());
}

#define SGNET_INSTANTIATE(T)                                                                                   \
  template SpanDistributions span_distributions(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template GradientTape<T>::Var record_span_log_probs(GradientTape<T>&, GradientTape<T>::Var,                  \
                                                      const Parameter<T>&, const Parameter<T>&);               \
  template std::vector<double> choice_predict(std::span<const Tensor<T>>, const Tensor<T>&, const Tensor<T>&); \
  template GradientTape<T>::Var record_choice_log_probs(GradientTape<T>&,                                      \
                                                        std::span<const GradientTape<T>::Var>,                 \
                                                        const Parameter<T>&, const Parameter<T>&);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
