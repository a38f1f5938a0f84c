#include "sgnet/task.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace sgnet {

std::string_view to_string(TreeShape s) {
  switch (s) {
    case TreeShape::kRandom: return "random";
    case TreeShape::kStar: return "star";
    case TreeShape::kChain: return "chain";
  }
  return "random";
}

std::string_view to_string(QueryDirection d) { return d == QueryDirection::kAncestor ? "ancestor" : "descendant"; }

std::string_view to_string(TaskKind k) { return k == TaskKind::kChoice ? "choice" : "span"; }

QueryDirection query_direction_from_string(std::string_view s) {
  if (s == "ancestor") return QueryDirection::kAncestor;
  if (s == "descendant") return QueryDirection::kDescendant;
  throw std::invalid_argument("unknown query direction '" + std::string(s) + "'");
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "span") return TaskKind::kSpan;
  if (s == "choice") return TaskKind::kChoice;
  throw std::invalid_argument("unknown task kind '" + std::string(s) + "'");
}

void TaskConfig::validate() const {
  if (max_k == 0) throw std::invalid_argument("task: max_k must be at least 1");
  if (min_len > max_len) throw std::invalid_argument("task: min_len exceeds max_len");
  if (min_len < max_k + 2) throw std::invalid_argument("task: min_len must be at least max_k + 2");
  if (max_depth < max_k + 1) throw std::invalid_argument("task: max_depth must exceed max_k");
  if (!(unanswerable_rate >= 0.0 && unanswerable_rate <= 1.0)) {
    throw std::invalid_argument("task: unanswerable_rate must lie in [0, 1]");
  }
  if (choices < 2) throw std::invalid_argument("task: need at least 2 choices");
  if (vocab_size < first_word_token() + choices) throw std::invalid_argument("task: vocabulary too small");
  double total = 0;
  for (double w : shape_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("task: negative tree shape weight");
    total += w;
  }
  if (total <= 0) throw std::invalid_argument("task: tree shape weights sum to zero");
}

void to_json(nlohmann::json& j, const TaskConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"count", c.count},
                     {"min_len", c.min_len},
                     {"max_len", c.max_len},
                     {"vocab_size", c.vocab_size},
                     {"max_depth", c.max_depth},
                     {"max_k", c.max_k},
                     {"unanswerable_rate", c.unanswerable_rate},
                     {"direction", to_string(c.direction)},
                     {"tree_shapes",
                      {{"random", c.shape_weights[0]}, {"star", c.shape_weights[1]}, {"chain", c.shape_weights[2]}}},
                     {"choices", c.choices}};
}

void from_json(const nlohmann::json& j, TaskConfig& c) {
  TaskConfig d;
  c.kind = task_kind_from_string(j.value("kind", std::string(to_string(d.kind))));
  c.count = j.value("count", d.count);
  c.min_len = j.value("min_len", d.min_len);
  c.max_len = j.value("max_len", d.max_len);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_depth = j.value("max_depth", d.max_depth);
  c.max_k = j.value("max_k", d.max_k);
  c.unanswerable_rate = j.value("unanswerable_rate", d.unanswerable_rate);
  c.direction = query_direction_from_string(j.value("direction", std::string(to_string(d.direction))));
  c.shape_weights = d.shape_weights;
  if (j.contains("tree_shapes")) {
    const auto& s = j.at("tree_shapes");
    c.shape_weights = {s.value("random", 0.0), s.value("star", 0.0), s.value("chain", 0.0)};
  }
  c.choices = j.value("choices", d.choices);
}

std::vector<std::size_t> tree_depths(const DependencyTree& tree) {
  require_valid(tree);
  const std::size_t n = tree.size();
  std::vector<std::size_t> depth(n, kRoot);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> path;
    std::size_t cur = i;
    while (cur != kRoot && depth[cur] == kRoot) {
      path.push_back(cur);
      cur = tree.tokens[cur].head;
    }
    std::size_t d = cur == kRoot ? 0 : depth[cur] + 1;
    for (auto it = path.rbegin(); it != path.rend(); ++it) depth[*it] = d++;
  }
  return depth;
}

void resolve_query(TaskInstance& inst, QueryDirection direction) {
  const auto& tree = inst.tree;
  const std::size_t n = tree.size();
  if (inst.marked >= n) throw std::out_of_range("resolve_query: marked token out of range");
  auto kth_ancestor = [&](std::size_t i) {
    for (std::size_t step = 0; step < inst.k && i != kRoot; ++step) i = tree.tokens[i].head;
    return i;
  };
  inst.answerable = false;
  inst.answer = 0;
  if (direction == QueryDirection::kAncestor) {
    const auto a = kth_ancestor(inst.marked);
    if (a != kRoot) {
      inst.answerable = true;
      inst.answer = a;
    }
    return;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (kth_ancestor(i) == inst.marked) {
      ++hits;
      inst.answer = i;
    }
  }
  inst.answerable = hits == 1;
  if (!inst.answerable) inst.answer = 0;
}

namespace {

using Rng = std::mt19937_64;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

TreeShape pick_shape(const TaskConfig& c, Rng& rng) {
  std::discrete_distribution<int> dist(c.shape_weights.begin(), c.shape_weights.end());
  return static_cast<TreeShape>(dist(rng));
}

// Parent of node t given nodes [0, t) already placed, in generation order.
std::size_t attach(TreeShape shape, const std::vector<std::size_t>& depth, std::size_t max_parent_depth, Rng& rng) {
  const std::size_t t = depth.size();
  if (shape == TreeShape::kStar) return 0;
  if (shape == TreeShape::kChain && depth[t - 1] <= max_parent_depth) return t - 1;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < t; ++i) {
    if (depth[i] <= max_parent_depth) eligible.push_back(i);
  }
  return eligible[uniform(rng, 0, eligible.size() - 1)];
}

struct GrowingTree {
  std::vector<std::size_t> parent;  // kRoot for node 0
  std::vector<std::size_t> depth;

  void add(std::size_t p) {
    parent.push_back(p);
    depth.push_back(p == kRoot ? 0 : depth[p] + 1);
  }
};

GrowingTree grow(std::size_t n, TreeShape shape, std::size_t max_depth, Rng& rng) {
  GrowingTree g;
  g.add(kRoot);
  while (g.parent.size() < n) g.add(attach(shape, g.depth, max_depth - 1, rng));
  return g;
}

// Places generation-order nodes at random positions.
TaskInstance finish(const GrowingTree& g, std::size_t marked, std::size_t k, const TaskConfig& c, Rng& rng) {
  const std::size_t n = g.parent.size();
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), 0);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::vector<std::size_t> heads(n);
  for (std::size_t t = 0; t < n; ++t) heads[pos[t]] = g.parent[t] == kRoot ? kRoot : pos[g.parent[t]];
  TaskInstance inst;
  inst.tree = DependencyTree::from_heads(heads);
  inst.marked = pos[marked];
  inst.k = k;
  inst.words.resize(n);
  for (auto& w : inst.words) w = uniform(rng, c.first_word_token(), c.vocab_size - 1);
  return inst;
}

TaskInstance descendant_instance(const TaskConfig& c, Rng& rng) {
  const std::size_t len = uniform(rng, c.min_len, c.max_len);
  const std::size_t k = uniform(rng, 1, c.max_k);
  const bool answerable = !coin(rng, c.unanswerable_rate);
  const TreeShape shape = pick_shape(c, rng);
  // The marked node hangs below an existing node; an answerable instance
  // adds a chain of k nodes under it, an unanswerable one leaves it a leaf.
  const std::size_t chain = answerable ? k : 0;
  auto g = grow(len - chain - 1, shape, c.max_depth, rng);
  const std::size_t parent_cap = c.max_depth - chain - 1;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < g.depth.size(); ++i) {
    if (g.depth[i] <= parent_cap) eligible.push_back(i);
  }
  const std::size_t m = g.parent.size();
  g.add(eligible[uniform(rng, 0, eligible.size() - 1)]);
  for (std::size_t step = 0; step < chain; ++step) g.add(g.parent.size() - 1);
  return finish(g, m, k, c, rng);
}

TaskInstance ancestor_instance(const TaskConfig& c, Rng& rng) {
  const std::size_t len = uniform(rng, c.min_len, c.max_len);
  const std::size_t k = uniform(rng, 1, c.max_k);
  const bool answerable = !coin(rng, c.unanswerable_rate);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto g = grow(len, pick_shape(c, rng), c.max_depth, rng);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < len; ++i) {
      if ((g.depth[i] >= k) == answerable) eligible.push_back(i);
    }
    if (!eligible.empty()) return finish(g, eligible[uniform(rng, 0, eligible.size() - 1)], k, c, rng);
  }
  throw std::invalid_argument("task: cannot place a query of depth " + std::to_string(k) +
                              " under the configured tree shapes");
}

SyntheticTask generate(const TaskConfig& config, std::uint64_t seed, TaskKind kind) {
  auto c = config;
  c.kind = kind;
  if (kind == TaskKind::kChoice) c.unanswerable_rate = 0.0;
  c.validate();
  Rng rng(seed);
  SyntheticTask task{c, {}};
  task.instances.reserve(c.count);
  for (std::size_t id = 0; id < c.count; ++id) {
    auto inst = c.direction == QueryDirection::kAncestor ? ancestor_instance(c, rng) : descendant_instance(c, rng);
    inst.id = id;
    resolve_query(inst, c.direction);
    if (kind == TaskKind::kChoice) {
      if (!inst.answerable) throw std::logic_error("choice task produced an unanswerable instance");
      const std::size_t gold = inst.words[inst.answer];
      std::vector<std::size_t> pool;
      for (std::size_t w = c.first_word_token(); w < c.vocab_size; ++w) {
        if (w != gold) pool.push_back(w);
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      inst.choices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c.choices - 1));
      inst.gold_choice = uniform(rng, 0, c.choices - 1);
      inst.choices.insert(inst.choices.begin() + static_cast<std::ptrdiff_t>(inst.gold_choice), gold);
    }
    inst.words[inst.marked] = kMaskToken;
    task.instances.push_back(std::move(inst));
  }
  return task;
}

nlohmann::json instance_to_json(const TaskInstance& inst) {
  std::vector<long long> heads;
  for (const auto& t : inst.tree.tokens) heads.push_back(t.head == kRoot ? -1 : static_cast<long long>(t.head));
  nlohmann::json j{{"id", inst.id},   {"words", inst.words},           {"heads", heads},
                   {"marked", inst.marked}, {"k", inst.k},           {"answerable", inst.answerable},
                   {"answer", inst.answer}};
  if (!inst.choices.empty()) {
    j["choices"] = inst.choices;
    j["gold_choice"] = inst.gold_choice;
  }
  return j;
}

TaskInstance instance_from_json(const nlohmann::json& j) {
  TaskInstance inst;
  inst.id = j.at("id").get<std::uint64_t>();
  inst.words = j.at("words").get<std::vector<std::size_t>>();
  std::vector<std::size_t> heads;
  for (const auto& h : j.at("heads")) heads.push_back(h.get<long long>() < 0 ? kRoot : h.get<std::size_t>());
  inst.tree = DependencyTree::from_heads(heads);
  require_valid(inst.tree);
  if (inst.words.size() != inst.tree.size()) throw std::invalid_argument("task: words and heads lengths differ");
  inst.marked = j.at("marked").get<std::size_t>();
  inst.k = j.at("k").get<std::size_t>();
  inst.answerable = j.at("answerable").get<bool>();
  inst.answer = j.at("answer").get<std::size_t>();
  if (j.contains("choices")) {
    inst.choices = j.at("choices").get<std::vector<std::size_t>>();
    inst.gold_choice = j.at("gold_choice").get<std::size_t>();
  }
  return inst;
}

}  // namespace

SyntheticTask gen_ancestor_copy_task(const TaskConfig& config, std::uint64_t seed) {
  return generate(config, seed, TaskKind::kSpan);
}

SyntheticTask gen_choice_task(const TaskConfig& config, std::uint64_t seed) {
  return generate(config, seed, TaskKind::kChoice);
}

SyntheticTask generate_task(const TaskConfig& config, std::uint64_t seed) {
  return generate(config, seed, config.kind);
}

std::string to_jsonl(const SyntheticTask& task) {
  std::string out = nlohmann::json{{"format", "sgnet-task"}, {"config", task.config}}.dump() + "\n";
  for (const auto& inst : task.instances) out += instance_to_json(inst).dump() + "\n";
  return out;
}

SyntheticTask task_from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  SyntheticTask task;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!header) {
        if (j.value("format", "") != "sgnet-task") throw std::invalid_argument("missing task header");
        task.config = j.at("config").get<TaskConfig>();
        header = true;
      } else {
        task.instances.push_back(instance_from_json(j));
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("task line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw std::invalid_argument("task: empty file");
  return task;
}

EncodedInput encode_span_input(const TaskInstance& inst) {
  EncodedInput out;
  out.tokens = {kClsToken, kFirstKToken + inst.k - 1, kSepToken};
  out.passage_offset = out.tokens.size();
  out.tokens.insert(out.tokens.end(), inst.words.begin(), inst.words.end());
  out.tokens.push_back(kSepToken);

  SequenceLayout layout;
  layout.slots = {SequenceLayout::kSpecial, 0, SequenceLayout::kSpecial};
  layout.slots.insert(layout.slots.end(), inst.words.size(), 1);
  layout.slots.push_back(SequenceLayout::kSpecial);
  const SdoiMask sentences[] = {SdoiMask::identity(1), build_sdoi_mask(inst.tree)};
  out.mask = compose_sequence_mask(sentences, layout);
  if (inst.answerable) out.gold_start = out.gold_end = out.passage_offset + inst.answer;
  return out;
}

std::vector<EncodedInput> encode_choice_inputs(const TaskInstance& inst) {
  if (inst.choices.size() < 2) throw std::invalid_argument("choice input: instance has fewer than 2 candidates");
  SequenceLayout layout;
  layout.slots = {SequenceLayout::kSpecial, 0, 1, SequenceLayout::kSpecial};
  layout.slots.insert(layout.slots.end(), inst.words.size(), 2);
  layout.slots.push_back(SequenceLayout::kSpecial);
  const SdoiMask sentences[] = {SdoiMask::identity(1), SdoiMask::identity(1), build_sdoi_mask(inst.tree)};
  const auto mask = compose_sequence_mask(sentences, layout);

  std::vector<EncodedInput> out;
  for (auto cand : inst.choices) {
    EncodedInput e;
    e.tokens = {kClsToken, kFirstKToken + inst.k - 1, cand, kSepToken};
    e.passage_offset = e.tokens.size();
    e.tokens.insert(e.tokens.end(), inst.words.begin(), inst.words.end());
    e.tokens.push_back(kSepToken);
    e.mask = mask;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sgnet
