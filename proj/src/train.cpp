#include "sgnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgnet/heads.hpp"

namespace sgnet {

std::string_view to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision precision_from_string(std::string_view s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw std::invalid_argument("unknown precision '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("run: learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("run: batch_size must be positive");
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) throw std::invalid_argument("run: warmup_fraction outside [0, 1]");
  if (!(weight_decay >= 0)) throw std::invalid_argument("run: weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("run: betas outside [0, 1)");
  if (!(clip_norm >= 0)) throw std::invalid_argument("run: clip_norm must be non-negative");
  model.validate();
  task.validate();
}

std::size_t RunConfig::total_steps(std::size_t instances) const {
  if (!epochs) return max_steps;
  const std::size_t per_epoch = (instances + batch_size - 1) / batch_size;
  const std::size_t steps = *epochs * per_epoch;
  return max_steps > 0 ? std::min(steps, max_steps) : steps;
}

double RunConfig::learning_rate_at(std::size_t step, std::size_t total) const {
  const auto warm = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total)));
  if (step <= warm) return learning_rate * static_cast<double>(step) / static_cast<double>(warm);
  return learning_rate * static_cast<double>(total - step + 1) / static_cast<double>(total - warm);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs ? nlohmann::json(*c.epochs) : nlohmann::json(nullptr)},
                     {"max_steps", c.max_steps},
                     {"warmup_fraction", c.warmup_fraction},
                     {"weight_decay", c.weight_decay},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"clip_norm", c.clip_norm},
                     {"precision", to_string(c.precision)},
                     {"model", c.model},
                     {"task", c.task}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  static const char* const kKeys[] = {"seed",  "learning_rate", "batch_size", "epochs",    "max_steps",
                                      "warmup_fraction", "weight_decay", "beta1", "beta2", "adam_eps",
                                      "clip_norm", "precision", "model", "task"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw std::invalid_argument("run config: unknown key '" + key + "'");
    }
  }
  RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs.reset();
  if (j.contains("epochs") && !j.at("epochs").is_null()) c.epochs = j.at("epochs").get<std::size_t>();
  c.max_steps = j.value("max_steps", d.max_steps);
  c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.precision = precision_from_string(j.value("precision", std::string(to_string(d.precision))));
  c.model = j.contains("model") ? j.at("model").get<SgNetConfig>() : d.model;
  c.task = j.contains("task") ? j.at("task").get<TaskConfig>() : d.task;
}

nlohmann::json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

template <typename T>
typename GradientTape<T>::Var record_batch_loss(GradientTape<T>& tape, const SgNetModel<T>& model,
                                                std::span<const TaskInstance* const> batch, TaskKind kind,
                                                std::size_t* clamped) {
  using Var = typename GradientTape<T>::Var;
  const double log_floor = std::log(kProbabilityFloor);
  auto note = [&](Var lp) {
    if (clamped && static_cast<double>(tape.value(lp)(0, 0)) < log_floor) ++*clamped;
    return lp;
  };
  Var total;
  for (const auto* inst : batch) {
    Var loss;
    if (kind == TaskKind::kSpan) {
      const auto in = encode_span_input(*inst);
      const auto enc = record_encode(tape, model, in.tokens, in.mask);
      const auto lp = record_span_log_probs(tape, enc.h_bar, model.span_w, model.span_b);
      loss = tape.add(note(tape.pick(lp, 0, in.gold_start)), note(tape.pick(lp, 1, in.gold_end)));
      loss = tape.scale(loss, T(-0.5));
    } else {
      std::vector<Var> h_bars;
      for (const auto& in : encode_choice_inputs(*inst)) {
        h_bars.push_back(record_encode(tape, model, in.tokens, in.mask).h_bar);
      }
      const auto lp = record_choice_log_probs<T>(tape, h_bars, model.choice_w, model.choice_b);
      loss = tape.scale(note(tape.pick(lp, 0, inst->gold_choice)), T(-1));
    }
    total = total.valid() ? tape.add(total, loss) : loss;
  }
  return tape.scale(total, T(1) / static_cast<T>(batch.size()));
}

template <typename T>
TrainOutcome<T> train(const RunConfig& run, const SyntheticTask& data, std::ostream* log) {
  run.validate();
  if (data.instances.empty()) throw std::invalid_argument("train: empty dataset");
  auto model_config = run.model;
  model_config.seed = run.seed;
  TrainOutcome<T> out{SgNetModel<T>::init(model_config)};
  auto& model = out.model;
  const TaskKind kind = data.config.kind;

  std::vector<Parameter<T>*> params;
  model.visit([&](Parameter<T>& p) { params.push_back(&p); });
  std::vector<Tensor<T>> m1, m2;
  for (auto* p : params) {
    m1.emplace_back(p->value.rows(), p->value.cols());
    m2.emplace_back(p->value.rows(), p->value.cols());
  }

  std::mt19937_64 rng(run.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::size_t total = run.total_steps(data.instances.size());
  std::vector<const TaskInstance*> batch;
  for (std::size_t step = 1; step <= total; ++step) {
    batch.clear();
    while (batch.size() < std::min(run.batch_size, order.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&data.instances[order[cursor++]]);
    }

    GradientTape<T> tape;
    std::size_t clamped = 0;
    const auto loss = record_batch_loss(tape, model, batch, kind, &clamped);
    const double loss_value = static_cast<double>(tape.value(loss)(0, 0));
    if (!std::isfinite(loss_value)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": loss is not finite");
    }
    tape.backward(loss);

    std::vector<Tensor<T>> grads;
    double sq = 0;
    for (auto* p : params) {
      grads.push_back(tape.parameter_grad(*p));
      for (T g : grads.back().data()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": gradient is not finite");
    }
    const double clip = run.clip_norm > 0 && norm > run.clip_norm ? run.clip_norm / norm : 1.0;
    const double lr = run.learning_rate_at(step, total);
    const double bc1 = 1 - std::pow(run.beta1, static_cast<double>(step));
    const double bc2 = 1 - std::pow(run.beta2, static_cast<double>(step));

    for (std::size_t k = 0; k < params.size(); ++k) {
      auto w = params[k]->value.data();
      const auto g = grads[k].data();
      auto a = m1[k].data();
      auto b = m2[k].data();
      // Vectors (biases, layer-norm parameters) are not decayed.
      const double decay = params[k]->value.rows() > 1 ? run.weight_decay : 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        const double ai = run.beta1 * static_cast<double>(a[i]) + (1 - run.beta1) * gi;
        const double bi = run.beta2 * static_cast<double>(b[i]) + (1 - run.beta2) * gi * gi;
        a[i] = static_cast<T>(ai);
        b[i] = static_cast<T>(bi);
        const double update = (ai / bc1) / (std::sqrt(bi / bc2) + run.adam_eps) + decay * static_cast<double>(w[i]);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * update);
      }
    }

    out.final_loss = loss_value;
    out.steps = step;
    if (log) {
      *log << nlohmann::json{{"step", step}, {"loss", loss_value}, {"lr", lr}, {"grad_norm", norm},
                             {"clamped", clamped}}.dump()
           << "\n";
    }
  }
  out.delta = kind == TaskKind::kSpan ? fit_threshold(model, data) : 0.0;
  return out;
}

template <typename T>
std::vector<double> final_scores(const SgNetModel<T>& model, const SyntheticTask& data) {
  std::vector<double> out;
  out.reserve(data.instances.size());
  for (const auto& inst : data.instances) {
    const auto in = encode_span_input(inst);
    const auto enc = encode(model, in.tokens, in.mask);
    const auto dist = span_distributions(enc.h_bar, model.span_w.value, model.span_b.value);
    out.push_back(best_span(dist).score - na_score(dist));
  }
  return out;
}

template <typename T>
double fit_threshold(const SgNetModel<T>& model, const SyntheticTask& data) {
  const auto scores = final_scores(model, data);
  std::unique_ptr<bool[]> labels(new bool[data.instances.size()]);
  for (std::size_t i = 0; i < data.instances.size(); ++i) labels[i] = data.instances[i].answerable;
  return search_threshold(scores, std::span<const bool>(labels.get(), data.instances.size()));
}

namespace {

template <typename T>
void train_and_save(const RunConfig& run, const SyntheticTask& data, const std::string& checkpoint,
                    std::ostream* log) {
  const auto outcome = train<T>(run, data, log);
  nlohmann::json meta{{"delta", real_to_json(outcome.delta)},
                      {"steps", outcome.steps},
                      {"final_loss", outcome.final_loss},
                      {"task_kind", to_string(data.config.kind)},
                      {"run", run}};
  save_checkpoint(checkpoint, outcome.model, meta);
}

}  // namespace

void run_training(const RunConfig& run, const SyntheticTask& data, const std::string& checkpoint,
                  std::ostream* log) {
  if (run.precision == Precision::kF64) {
    train_and_save<double>(run, data, checkpoint, log);
  } else {
    train_and_save<float>(run, data, checkpoint, log);
  }
}

#define SGNET_INSTANTIATE(T)                                                                                  \
  template TrainOutcome<T> train(const RunConfig&, const SyntheticTask&, std::ostream*);                      \
  template GradientTape<T>::Var record_batch_loss(GradientTape<T>&, const SgNetModel<T>&,                     \
                                                  std::span<const TaskInstance* const>, TaskKind, std::size_t*); \
  template std::vector<double> final_scores(const SgNetModel<T>&, const SyntheticTask&);                      \
  template double fit_threshold(const SgNetModel<T>&, const SyntheticTask&);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
