#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgnet/conllu.hpp"
#include "sgnet/evaluate.hpp"
#include "sgnet/heatmap.hpp"
#include "sgnet/sdoi.hpp"
#include "sgnet/task.hpp"
#include "sgnet/train.hpp"

namespace {

using namespace sgnet;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& data) {
  if (path == "-") {
    std::cout << data;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << data;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;

  RunConfig run() const {
    RunConfig r;
    if (!config.empty()) r = nlohmann::json::parse(slurp(config)).get<RunConfig>();
    if (seed) r.seed = *seed;
    if (precision) r.precision = precision_from_string(*precision);
    return r;
  }
};

// Word-level masks of every sentence, optionally projected to wordpieces and
// composed block-diagonally.
SdoiMask mask_from_conllu(const std::string& conllu, const std::string& alignment, int sentence) {
  const auto trees = parse_conllu(slurp(conllu));
  if (trees.empty()) throw std::runtime_error(conllu + ": no sentences");
  std::vector<SdoiMask> masks;
  SequenceLayout layout;
  for (std::size_t s = 0; s < trees.size(); ++s) {
    if (sentence >= 0 && static_cast<std::size_t>(sentence) != s) continue;
    masks.push_back(build_sdoi_mask(trees[s]));
    layout.slots.insert(layout.slots.end(), trees[s].size(), static_cast<int>(masks.size() - 1));
  }
  if (masks.empty()) throw std::runtime_error("sentence index out of range");
  auto mask = masks.size() == 1 ? masks[0] : compose_sequence_mask(masks, layout);
  if (!alignment.empty()) mask = project_mask_to_wordpieces(mask, parse_alignment_json(slurp(alignment)));
  return mask;
}

std::string grid(const SdoiMask& m) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) out += m(i, j) ? '1' : '.';
    out += '\n';
  }
  return out;
}

std::string token_label(std::size_t id) {
  switch (id) {
    case kClsToken: return "[CLS]";
    case kSepToken: return "[SEP]";
    case kPadToken: return "[PAD]";
    case kMaskToken: return "[MASK]";
    default: return "t" + std::to_string(id);
  }
}

template <typename T>
void visualize(const std::string& checkpoint, const TaskInstance& inst, bool syntax, HeatmapFormat format,
               const std::string& out) {
  const auto model = load_checkpoint<T>(checkpoint);
  const auto in = encode_span_input(inst);
  EncodeTraces<T> traces;
  encode(model, in.tokens, in.mask, &traces);
  const auto& trace = syntax ? traces.syntax : traces.vanilla;
  if (trace.heads.empty()) throw std::runtime_error("the requested branch was not evaluated for this aggregation mode");
  std::vector<std::string> labels;
  for (auto id : in.tokens) labels.push_back(token_label(id));
  export_heatmap(trace, labels, format, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-guided attention toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* mask = app.add_subcommand("mask", "Build or inspect SDOI masks");
  mask->require_subcommand(1);
  std::string conllu, alignment, mask_out, mask_json, mask_in;
  int sentence = -1;
  auto* build = mask->add_subcommand("build", "CoNLL-U to a binary mask");
  build->add_option("--conllu", conllu, "Input CoNLL-U")->required()->check(CLI::ExistingFile);
  build->add_option("--alignment", alignment, "Word to wordpiece alignment JSON")->check(CLI::ExistingFile);
  build->add_option("--sentence", sentence, "Only this sentence (0-based); default composes all");
  build->add_option("--out", mask_out, "Binary mask output")->required();
  build->add_option("--json", mask_json, "Also write the JSON form");
  auto* show = mask->add_subcommand("show", "Print a mask");
  show->add_option("--in", mask_in, "Binary mask")->check(CLI::ExistingFile);
  show->add_option("--conllu", conllu, "Or build from CoNLL-U")->check(CLI::ExistingFile);
  show->add_option("--sentence", sentence, "Sentence index for --conllu");
  bool show_json = false;
  show->add_flag("--json", show_json, "JSON instead of a grid");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic task");
  std::string gen_out, kind;
  std::optional<std::size_t> count;
  gen->add_option("--out", gen_out, "Task JSONL output")->required();
  gen->add_option("--count", count, "Instances (overrides task.count)");
  gen->add_option("--kind", kind, "span or choice")->check(CLI::IsMember({"span", "choice"}));

  auto* trn = app.add_subcommand("train", "Train on a task file");
  std::string data, ckpt, log_path;
  trn->add_option("--data", data, "Task JSONL")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", ckpt, "Checkpoint output")->required();
  trn->add_option("--log", log_path, "Per-step metric log (JSONL)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string report, csv, preds;
  ev->add_option("--checkpoint", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data, "Task JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--report", report, "JSON report (default stdout)");
  ev->add_option("--csv", csv, "Bucketed CSV report");
  ev->add_option("--predictions", preds, "Predictions JSONL");

  auto* viz = app.add_subcommand("viz", "Export attention heatmaps");
  std::size_t index = 0;
  std::string branch = "syntax", format = "svg", viz_out;
  viz->add_option("--checkpoint", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  viz->add_option("--data", data, "Task JSONL")->required()->check(CLI::ExistingFile);
  viz->add_option("--index", index, "Instance index");
  viz->add_option("--branch", branch, "syntax or vanilla")->check(CLI::IsMember({"syntax", "vanilla"}));
  viz->add_option("--format", format, "csv or svg")->check(CLI::IsMember({"csv", "svg"}));
  viz->add_option("--out", viz_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      const auto m = mask_from_conllu(conllu, alignment, sentence);
      spit(mask_out, encode_mask_binary(m));
      if (!mask_json.empty()) spit(mask_json, mask_to_json(m) + "\n");
    } else if (show->parsed()) {
      if (mask_in.empty() == conllu.empty()) throw std::runtime_error("mask show needs exactly one of --in, --conllu");
      const auto m = mask_in.empty() ? mask_from_conllu(conllu, "", sentence) : decode_mask_binary(slurp(mask_in));
      std::cout << (show_json ? mask_to_json(m) + "\n" : grid(m));
    } else if (gen->parsed()) {
      auto run = g.run();
      if (count) run.task.count = *count;
      if (!kind.empty()) run.task.kind = task_kind_from_string(kind);
      spit(gen_out, to_jsonl(generate_task(run.task, run.seed)));
    } else if (trn->parsed()) {
      auto run = g.run();
      const auto task = task_from_jsonl(slurp(data));
      run.task = task.config;
      std::ofstream log;
      if (!log_path.empty()) {
        log.open(log_path, std::ios::binary | std::ios::trunc);
        if (!log) throw std::runtime_error("cannot write " + log_path);
      }
      run_training(run, task, ckpt, log_path.empty() ? nullptr : &log);
    } else if (ev->parsed()) {
      const auto r = evaluate_checkpoint(ckpt, task_from_jsonl(slurp(data)));
      spit(report.empty() ? "-" : report, report_to_json(r).dump(2) + "\n");
      if (!csv.empty()) spit(csv, report_to_csv(r));
      if (!preds.empty()) spit(preds, predictions_to_jsonl(r));
    } else if (viz->parsed()) {
      const auto task = task_from_jsonl(slurp(data));
      if (index >= task.instances.size()) throw std::runtime_error("instance index out of range");
      const bool syntax = branch == "syntax";
      const auto fmt = heatmap_format_from_string(format);
      if (read_checkpoint_header(ckpt).scalar_bytes == sizeof(double)) {
        visualize<double>(ckpt, task.instances[index], syntax, fmt, viz_out);
      } else {
        visualize<float>(ckpt, task.instances[index], syntax, fmt, viz_out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
