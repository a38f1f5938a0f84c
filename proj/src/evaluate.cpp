#include "sgnet/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sgnet/train.hpp"

namespace sgnet {

namespace {

void check_pairs(const std::vector<std::size_t>& lengths, const std::vector<bool>& correct, std::size_t buckets) {
  if (lengths.size() != correct.size()) throw std::invalid_argument("buckets: lengths and outcomes differ in size");
  if (buckets == 0) throw std::invalid_argument("buckets: need at least one bucket");
}

void finish(std::vector<Bucket>& out) {
  for (auto& b : out) {
    if (b.count > 0) b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.count);
  }
}

}  // namespace

std::vector<Bucket> bucket_by_range(const std::vector<std::size_t>& lengths, const std::vector<bool>& correct,
                                    std::size_t buckets) {
  check_pairs(lengths, correct, buckets);
  std::vector<Bucket> out(buckets);
  if (lengths.empty()) return out;
  const auto [mn, mx] = std::minmax_element(lengths.begin(), lengths.end());
  const double lo = static_cast<double>(*mn);
  const double width = (static_cast<double>(*mx) - lo) / static_cast<double>(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == buckets ? static_cast<double>(*mx) : lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    std::size_t b = 0;
    if (width > 0) {
      b = static_cast<std::size_t>(std::floor((static_cast<double>(lengths[i]) - lo) / width));
      b = std::min(b, buckets - 1);
    }
    ++out[b].count;
    out[b].correct += correct[i];
  }
  finish(out);
  return out;
}

std::vector<Bucket> bucket_by_count(const std::vector<std::size_t>& lengths, const std::vector<bool>& correct,
                                    std::size_t buckets) {
  check_pairs(lengths, correct, buckets);
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lengths[a] < lengths[b]; });
  std::vector<Bucket> out(buckets);
  const std::size_t n = order.size();
  std::size_t start = 0;
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t size = n / buckets + (b < n % buckets ? 1 : 0);
    auto& bk = out[b];
    if (size > 0) {
      bk.lo = static_cast<double>(lengths[order[start]]);
      bk.hi = static_cast<double>(lengths[order[start + size - 1]]);
    }
    for (std::size_t i = start; i < start + size; ++i) {
      ++bk.count;
      bk.correct += correct[order[i]];
    }
    start += size;
  }
  finish(out);
  return out;
}

template <typename T>
EvalReport evaluate(const SgNetModel<T>& model, const SyntheticTask& data, double delta, std::size_t buckets) {
  EvalReport r;
  r.kind = data.config.kind;
  r.count = data.instances.size();
  r.delta = delta;
  std::vector<std::size_t> lengths;
  std::vector<bool> correct;
  std::size_t em = 0, answerability = 0;
  for (const auto& inst : data.instances) {
    InstancePrediction p;
    p.id = inst.id;
    if (r.kind == TaskKind::kSpan) {
      const auto in = encode_span_input(inst);
      const auto enc = encode(model, in.tokens, in.mask);
      p.span = predict_answer(span_distributions(enc.h_bar, model.span_w.value, model.span_b.value), delta);
      answerability += p.span.answerable == inst.answerable;
      p.correct = p.span.answerable == inst.answerable &&
                  (!inst.answerable || (p.span.start == in.gold_start && p.span.end == in.gold_end));
    } else {
      std::vector<Tensor<T>> h_bars;
      for (const auto& in : encode_choice_inputs(inst)) h_bars.push_back(encode(model, in.tokens, in.mask).h_bar);
      const auto probs = choice_predict<T>(h_bars, model.choice_w.value, model.choice_b.value);
      p.choice = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      p.correct = p.choice == inst.gold_choice;
    }
    em += p.correct;
    lengths.push_back(inst.words.size());
    correct.push_back(p.correct);
    r.predictions.push_back(p);
  }
  if (r.count > 0) {
    r.exact_match = static_cast<double>(em) / static_cast<double>(r.count);
    r.answerability_accuracy = static_cast<double>(answerability) / static_cast<double>(r.count);
  }
  r.range_buckets = bucket_by_range(lengths, correct, buckets);
  r.count_buckets = bucket_by_count(lengths, correct, buckets);
  return r;
}

namespace {

template <typename T>
EvalReport evaluate_loaded(const std::string& checkpoint, const SyntheticTask& data, std::size_t buckets) {
  nlohmann::json meta;
  const auto model = load_checkpoint<T>(checkpoint, &meta);
  const auto& c = model.config;
  const std::size_t longest = data.config.max_len + 6;
  if (data.config.vocab_size > c.vocab_size || longest > c.max_positions) {
    throw std::invalid_argument("evaluate: task vocabulary or length exceeds the checkpoint's model config");
  }
  const std::string kind(to_string(data.config.kind));
  if (meta.contains("task_kind") && meta.at("task_kind").get<std::string>() != kind) {
    throw std::invalid_argument("evaluate: checkpoint was trained on a different task kind");
  }
  const double delta = meta.contains("delta") ? real_from_json(meta.at("delta")) : 0.0;
  return evaluate(model, data, delta, buckets);
}

nlohmann::json buckets_to_json(const std::vector<Bucket>& buckets) {
  auto arr = nlohmann::json::array();
  for (const auto& b : buckets) {
    arr.push_back({{"lo", b.lo},
                   {"hi", b.hi},
                   {"count", b.count},
                   {"accuracy", b.accuracy ? nlohmann::json(*b.accuracy) : nlohmann::json(nullptr)}});
  }
  return arr;
}

}  // namespace

EvalReport evaluate_checkpoint(const std::string& checkpoint, const SyntheticTask& data, std::size_t buckets) {
  const auto header = read_checkpoint_header(checkpoint);
  if (header.scalar_bytes == sizeof(double)) return evaluate_loaded<double>(checkpoint, data, buckets);
  return evaluate_loaded<float>(checkpoint, data, buckets);
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j{{"task_kind", to_string(r.kind)},
                   {"count", r.count},
                   {"exact_match", r.exact_match},
                   {"buckets", {{"equal_range", buckets_to_json(r.range_buckets)},
                                {"equal_count", buckets_to_json(r.count_buckets)}}}};
  if (r.kind == TaskKind::kSpan) {
    j["answerability_accuracy"] = r.answerability_accuracy;
    j["delta"] = real_to_json(r.delta);
  }
  return j;
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "scheme,bucket,lo,hi,count,accuracy\n";
  auto rows = [&](const char* scheme, const std::vector<Bucket>& buckets) {
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      out << scheme << ',' << b << ',' << buckets[b].lo << ',' << buckets[b].hi << ',' << buckets[b].count << ',';
      if (buckets[b].accuracy) out << *buckets[b].accuracy;
      out << '\n';
    }
  };
  rows("equal_range", r.range_buckets);
  rows("equal_count", r.count_buckets);
  return out.str();
}

std::string predictions_to_jsonl(const EvalReport& r) {
  std::string out;
  for (const auto& p : r.predictions) {
    nlohmann::json j;
    if (r.kind == TaskKind::kSpan) {
      j = {{"id", p.id},
           {"answerable", p.span.answerable},
           {"start", p.span.start},
           {"end", p.span.end},
           {"score_has", real_to_json(p.span.score_has)},
           {"score_na", p.span.score_na},
           {"final_score", real_to_json(p.span.final_score)}};
    } else {
      j = {{"id", p.id}, {"choice", p.choice}, {"correct", p.correct}};
    }
    out += j.dump() + "\n";
  }
  return out;
}

template EvalReport evaluate(const SgNetModel<float>&, const SyntheticTask&, double, std::size_t);
template EvalReport evaluate(const SgNetModel<double>&, const SyntheticTask&, double, std::size_t);

}  // namespace sgnet
