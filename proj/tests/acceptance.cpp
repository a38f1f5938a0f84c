// Acceptance gate. Prints one PASS/FAIL line per criterion; exits non-zero
// when a hard criterion fails. Criterion numbers on the command line select a
// subset.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "constructive.hpp"
#include "oracles.hpp"
#include "sgnet/evaluate.hpp"
#include "sgnet/heads.hpp"
#include "sgnet/train.hpp"

using namespace sgnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  bool soft;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

Outcome mask_example() {
  const auto m = build_sdoi_mask(DependencyTree::from_heads({1, 2, kRoot, 5, 5, 2}));
  bool ok = true;
  for (std::size_t j : {2, 4, 5}) ok = ok && m(4, j);
  for (std::size_t j : {0, 1, 3}) ok = ok && !m(4, j);
  std::string row;
  for (std::size_t j = 0; j < 6; ++j) row += m(4, j) ? '1' : '0';
  return {ok, "row 4 = " + row};
}

Outcome mask_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::size_t bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto t = oracle::random_tree(len(rng), rng);
    const auto m = build_sdoi_mask(t);
    const auto want = oracle::closure_mask(t);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j) bad += m(i, j) != want[i][j];
  }
  return {bad == 0, "1000 trees, " + std::to_string(bad) + " mismatched bits"};
}

Outcome attention_support() {
  using T = double;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> len(1, 8), hd(1, 4), per(1, 4);
  double worst_sum = 0, worst_vanilla = 0, leaked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = len(rng), h = hd(rng), d = h * per(rng);
    auto p = AttentionParams<T>::random("a", d, h, 2 * d, rng);
    p.visit([&](Parameter<T>& q) {
      if (q.value.rows() == 1 && q.name.find("ln_gain") == std::string::npos)
        q.value = oracle::random_tensor<T>(1, q.value.cols(), rng, 0.5);
    });
    const auto x = oracle::random_tensor<T>(n, d, rng, 2.0);
    const auto mask = build_sdoi_mask(oracle::random_tree(n, rng));
    const auto trace = multi_head_attention(x, p, &mask).second;
    for (const auto& a : trace.heads) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) {
          s += a(i, j);
          if (!mask(i, j)) leaked = std::max(leaked, std::abs(a(i, j)));
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1));
      }
    }
    const auto ones = SdoiMask::all_ones(n);
    worst_vanilla = std::max(worst_vanilla, max_abs_diff(sdoi_attention_block(x, p, ones), vanilla_attention_block(x, p)));
  }
  return {worst_sum <= 1e-6 && leaked == 0 && worst_vanilla <= 1e-6,
          "max |row sum - 1| " + fmt(worst_sum) + ", max masked weight " + fmt(leaked) + ", all-ones vs vanilla " +
              fmt(worst_vanilla)};
}

Outcome gradient_fidelity() {
  using T = double;
  using Var = GradientTape<T>::Var;
  double worst = 0;
  std::string where;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 5, d = 16;
    Parameter<T> h{"H", oracle::random_tensor<T>(n, d, rng)};
    auto blk = AttentionParams<T>::random("syntax", d, 2, 2 * d, rng);
    Parameter<T> w{"span.w", oracle::random_tensor<T>(d, 2, rng, 0.5)}, b{"span.b", oracle::random_tensor<T>(1, 2, rng)};
    const auto mask = build_sdoi_mask(oracle::random_tree(n, rng));
    const std::size_t ys = seed % n, ye = (seed * 3) % n;
    std::vector<Parameter<T>*> params{&h, &w, &b};
    blk.visit([&](Parameter<T>& q) { params.push_back(&q); });
    const LossFn<T> fn = [&](GradientTape<T>& t) {
      const Var hv = t.parameter(h);
      const Var hp = record_attention_block(t, hv, blk, &mask);
      const Var hbar = record_aggregate(t, hv, hp, 0.5);
      const Var lp = record_span_log_probs(t, hbar, w, b);
      return t.scale(t.add(t.pick(lp, 0, ys), t.pick(lp, 1, ye)), T(-1));
    };
    const auto r = grad_check<T>(fn, params, 1e-5, 1e-4, 1e-4);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = "seed " + std::to_string(seed) + " " + r.worst->param;
    }
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " (" + where + ")"};
}

Outcome alpha_endpoints() {
  using T = double;
  SgNetConfig cfg;
  const std::vector<std::size_t> tok{kClsToken, 9, 17, kMaskToken, 33, kSepToken};
  const auto mask = build_sdoi_mask(DependencyTree::from_heads({kRoot, 0, 1, 1, 3, 0}));
  double e1 = 0, e0 = 0, emid = 0;
  for (double alpha : {1.0, 0.0, 0.5}) {
    cfg.alpha = alpha;
    const auto m = SgNetModel<T>::init(cfg);
    const auto out = encode(m, tok, mask);
    // branches recomputed outside the model
    Tensor<T> x(tok.size(), cfg.d_model);
    for (std::size_t i = 0; i < tok.size(); ++i)
      for (std::size_t c = 0; c < cfg.d_model; ++c)
        x(i, c) = m.token_embedding.value(tok[i], c) + m.position_embedding.value(i, c);
    x = layer_norm(x, m.emb_ln_gain.value, m.emb_ln_bias.value);
    for (const auto& blk : m.encoder) x = vanilla_attention_block(x, blk);
    const auto hp = sdoi_attention_block(x, m.syntax[0], mask);
    if (alpha == 1.0) e1 = max_abs_diff(out.h_bar, x);
    if (alpha == 0.0) e0 = max_abs_diff(out.h_bar, hp);
    if (alpha == 0.5) {
      Tensor<T> mean(x.rows(), x.cols());
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = (x[k] + hp[k]) / 2;
      emid = max_abs_diff(out.h_bar, mean);
    }
  }
  return {e1 <= 1e-7 && e0 <= 1e-7 && emid <= 1e-7,
          "alpha=1 " + fmt(e1) + ", alpha=0 " + fmt(e0) + ", alpha=0.5 " + fmt(emid)};
}

Outcome span_search() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 32);
  std::exponential_distribution<double> ex(1.0);
  std::size_t span_bad = 0, thr_bad = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = len(rng);
    SpanDistributions d{std::vector<double>(n), std::vector<double>(n)};
    for (auto* v : {&d.start, &d.end}) {
      double s = 0;
      for (auto& x : *v) s += (x = ex(rng));
      for (auto& x : *v) x /= s;
    }
    const auto got = best_span(d);
    const auto want = oracle::brute_best_span(d.start, d.end);
    span_bad += got.start != want.k || got.end != want.l || got.score != want.score;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = len(rng) + 1;
    std::vector<double> s(n);
    std::vector<bool> lab(n);
    std::unique_ptr<bool[]> flags(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = g(rng);
      lab[i] = coin(rng) ? s[i] > 0.2 : coin(rng);
      flags[i] = lab[i];
    }
    const double delta = search_threshold(s, std::span<const bool>(flags.get(), n));
    double best = 0;
    for (double c : oracle::threshold_candidates(s)) best = std::max(best, oracle::accuracy_at(s, lab, c));
    thr_bad += oracle::accuracy_at(s, lab, delta) != best;
  }
  return {span_bad == 0 && thr_bad == 0, "best_span mismatches " + std::to_string(span_bad) + "/500, threshold " +
                                             std::to_string(thr_bad) + "/200"};
}

// Shared between the learnability and ablation criteria.
struct TrainedRun {
  double test_em = 0;
  double train_em = 0;
  double seconds = 0;
};
std::map<std::pair<std::uint64_t, AggregationMode>, TrainedRun> g_runs;

TrainedRun train_and_test(std::uint64_t seed, AggregationMode mode, QueryDirection direction = QueryDirection::kDescendant) {
  const bool cache = direction == QueryDirection::kDescendant;
  if (cache) {
    const auto it = g_runs.find({seed, mode});
    if (it != g_runs.end()) return it->second;
  }
  RunConfig run;
  run.seed = seed;
  run.model.aggregation = mode;
  run.task.direction = direction;
  auto tc = run.task;
  tc.count = 2000;
  const auto train_set = generate_task(tc, 1000 + seed);
  tc.count = 500;
  const auto test_set = generate_task(tc, 5000 + seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = train<float>(run, train_set);
  TrainedRun r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.train_em = evaluate(out.model, train_set, out.delta).exact_match;
  r.test_em = evaluate(out.model, test_set, out.delta).exact_match;
  if (cache) g_runs[{seed, mode}] = r;
  return r;
}

Outcome learnability() {
  const auto constructive_report =
      evaluate(constructive::depth_one_model<double>(), generate_task(constructive::depth_one_task(500), 4242), 0.0);
  const auto dual = train_and_test(1, AggregationMode::kDual);
  const bool ok = dual.test_em >= 0.9 && constructive_report.exact_match == 1.0;
  return {ok, "dual test EM " + fmt(dual.test_em) + " after 3000 steps (" + fmt(dual.seconds, 3) +
                  " s); hand-set depth-1 EM " + fmt(constructive_report.exact_match)};
}

Outcome ablation() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto d = train_and_test(seed, AggregationMode::kDual);
    const auto v = train_and_test(seed, AggregationMode::kVanillaOnly);
    const auto s = train_and_test(seed, AggregationMode::kSyntaxOnly);
    const bool win = d.test_em >= v.test_em && d.test_em >= s.test_em;
    wins += win;
    detail += "seed " + std::to_string(seed) + ": dual " + fmt(d.test_em) + " vanilla_only " + fmt(v.test_em) +
              " syntax_only " + fmt(s.test_em) + (win ? " [dual best]" : " [dual not best]") + "; ";
  }
  detail += std::to_string(wins) + "/3 seeds";
  return {wins >= 2, detail};
}

Outcome determinism() {
  RunConfig run;
  run.max_steps = 300;
  auto tc = run.task;
  const auto data = generate_task(tc, 31);
  std::string logs[2], blobs[2];
  for (int i = 0; i < 2; ++i) {
    std::ostringstream log;
    const auto out = train<float>(run, data, &log);
    logs[i] = log.str();
    blobs[i] = serialize_parameters(out.model);
  }
  const auto path = std::filesystem::temp_directory_path() / "sgnet_acceptance";
  std::filesystem::create_directories(path);
  std::string files[2];
  for (int i = 0; i < 2; ++i) {
    const auto ck = (path / ("ck" + std::to_string(i) + ".bin")).string();
    run_training(run, data, ck);
    std::ifstream in(ck, std::ios::binary);
    files[i] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  const bool ok = logs[0] == logs[1] && blobs[0] == blobs[1] && files[0] == files[1] && files[0].size() > 8;
  return {ok, "300-step default runs: logs " + std::string(logs[0] == logs[1] ? "identical" : "differ") +
                  ", parameters " + (blobs[0] == blobs[1] ? "identical" : "differ") + ", checkpoint files " +
                  (files[0] == files[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  bool with_info = true;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--no-info") with_info = false;
    else only.insert(std::stoi(a));
  }
  const std::vector<Criterion> criteria = {
      {1, "mask example", 1, false, mask_example},
      {2, "mask oracle equivalence", 30, false, mask_oracle},
      {3, "attention support and normalization", 30, false, attention_support},
      {4, "gradient fidelity", 120, false, gradient_fidelity},
      {5, "aggregation endpoints", 10, false, alpha_endpoints},
      {6, "span search equivalence", 10, false, span_search},
      {7, "learnability", 900, false, learnability},
      {8, "ablation direction", 0, true, ablation},
      {9, "determinism", 300, false, determinism},
  };
  bool hard_failure = false;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0 || secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    std::string status = pass ? "PASS" : "FAIL";
    if (!pass && c.soft) status += " (soft, reported only)";
    if (!pass && !c.soft) hard_failure = true;
    std::cout << status << "  criterion " << c.id << ": " << c.name << " | " << o.detail << " | " << fmt(secs, 3)
              << " s";
    if (c.budget_s > 0) std::cout << " of " << fmt(c.budget_s, 4) << " s";
    if (!in_time) std::cout << " (over budget)";
    std::cout << std::endl;
  }
  if (with_info && (only.empty() || only.count(7))) {
    const auto r = train_and_test(1, AggregationMode::kDual, QueryDirection::kAncestor);
    std::cout << "INFO  ancestor-target direction, dual, seed 1: test EM " << fmt(r.test_em) << ", train EM "
              << fmt(r.train_em) << std::endl;
  }
  return hard_failure ? 1 : 0;
}
