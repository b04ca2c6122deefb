// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/cli.hpp"

#include "ocvtp/cost_model.hpp"
#include "ocvtp/evalbench.hpp"
#include "ocvtp/pruner.hpp"
#include "ocvtp/token_store.hpp"
#include "ocvtp/trainer.hpp"
#include "ocvtp/viz.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ocvtp {

namespace {

constexpr std::uint64_t kDefaultSeed = 20260;

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + part + "' is not an integer");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

/// Pairs reference items with last-layer items by item_id.
std::vector<std::pair<const TokenSequence*, const TokenSequence*>> pair_items(const TokenCorpus& reference,
                                                                            const TokenCorpus* last) {
  std::vector<std::pair<const TokenSequence*, const TokenSequence*>> out;
  for (const auto& item : reference.items) {
    const TokenSequence* other = &item;
    if (last) {
      other = last->find(item.item_id);
      if (!other) throw ConfigError("item '" + item.item_id + "' missing from the last-layer corpus");
      if (other->n() != item.n()) throw ShapeError("item '" + item.item_id + "': reference and last differ in n");
    }
    out.emplace_back(&item, other);
  }
  return out;
}

struct SynthArgs {
  std::string out;
  SynthSpec spec;
};

struct TrainArgs {
  std::string corpus, out, history;
  std::string budgets = "32,64,128,192";
  std::string loss = "aw_mse";
  std::string optimizer = "adam";
  TrainConfig config;
};

struct PruneArgs {
  std::string reference, last, checkpoint, out;
  int budget = 64;
  bool pad = false;
  bool nopad = false;
  int top_k = 1;
  std::uint64_t seed = kDefaultSeed;
};

struct EvalArgs {
  std::string corpus, checkpoint, out, csv;
  std::string budgets;
  std::string methods = "ocvtp,random,norm_topk,medoid";
  std::string seeds = "0";
  bool pad = false;
};

struct FlopsArgs {
  std::string arch = "llava-1.5";
  std::string arch_file, csv;
  std::int64_t vision = 576;
  std::int64_t text = 32;
  std::int64_t budget = -1;
};

struct VizArgs {
  std::string corpus, last, checkpoint, out_dir, grid;
  int budget = 64;
  bool pad = false;
  int max_items = 8;
  int cell = 16;
  std::uint64_t seed = kDefaultSeed;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  const TokenCorpus corpus = synth_corpus(a.spec);
  save_corpus(corpus, a.out);
  out << "wrote " << corpus.items.size() << " items (c=" << corpus.c() << ", n=" << corpus.min_n() << ".."
      << corpus.max_n() << ") to " << a.out << "\n";
  return 0;
}

int do_train(TrainArgs a, std::ostream& out) {
  const TokenCorpus corpus = load_corpus(a.corpus);
  a.config.budget_set = parse_int_list(a.budgets, "--budgets");
  a.config.loss_kind = parse_loss_kind(a.loss);
  if (a.optimizer != "adam" && a.optimizer != "sgd") throw ConfigError("--optimizer must be adam or sgd");
  a.config.optimizer = a.optimizer == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;

  const CheckpointBundle model = train(corpus, a.config, [&](int step, double loss, int budget) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "step %6d  budget %4d  loss %.6f\n", step, budget, loss);
    out << buf << std::flush;
  });
  save_checkpoint(model, a.out);

  const std::filesystem::path history =
      a.history.empty() ? with_suffix(a.out, ".loss.csv") : std::filesystem::path(a.history);
  std::ostringstream csv;
  csv << "step,budget,loss\n";
  char buf[96];
  for (std::size_t i = 0; i < model.loss_history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%.17g\n", i + 1, model.budget_history[i], model.loss_history[i]);
    csv << buf;
  }
  write_text(history, csv.str());
  out << "wrote checkpoint " << a.out << " and loss history " << history.string() << "\n";
  return 0;
}

int do_prune(const PruneArgs& a, std::ostream& out) {
  if (a.pad && a.nopad) throw ConfigError("--pad and --nopad are mutually exclusive");
  const PadMode mode = a.nopad ? PadMode::kNoPad : PadMode::kPad;
  const TokenCorpus reference = load_corpus(a.reference);
  std::optional<TokenCorpus> last;
  if (!a.last.empty()) last = load_corpus(a.last);
  const CheckpointBundle model = load_checkpoint(a.checkpoint);

  nlohmann::ordered_json kept = nlohmann::ordered_json::object();
  std::size_t index = 0;
  for (const auto& [ref, fwd] : pair_items(reference, last ? &*last : nullptr)) {
    PruneInput in;
    in.reference = ref->as_double();
    in.last = fwd->as_double();
    in.budget = a.budget;
    in.pad_mode = mode;
    in.top_k = a.top_k;
    const PruneResult r = prune(in, model.query, model.slot, mix_seed(a.seed, index++));
    kept[ref->item_id] = r.indices;
  }
  write_text(a.out, kept.dump() + "\n");
  const nlohmann::ordered_json meta{{"seed", a.seed},
                                    {"budget", a.budget},
                                    {"pad_mode", mode == PadMode::kPad ? "pad" : "nopad"},
                                    {"top_k", a.top_k},
                                    {"reference", a.reference},
                                    {"last", a.last.empty() ? a.reference : a.last},
                                    {"checkpoint", a.checkpoint}};
  write_text(with_suffix(a.out, ".meta.json"), meta.dump(2) + "\n");
  out << "pruned " << kept.size() << " items to " << a.out << "\n";
  return 0;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const TokenCorpus corpus = load_corpus(a.corpus);
  const CheckpointBundle model = load_checkpoint(a.checkpoint);
  BenchOptions opt;
  opt.budgets = parse_int_list(a.budgets, "--budgets");
  opt.methods.clear();
  std::stringstream ms(a.methods);
  for (std::string m; std::getline(ms, m, ',');) opt.methods.push_back(parse_method(m));
  opt.seeds.clear();
  for (int s : parse_int_list(a.seeds, "--seeds")) {
    if (s < 0) throw ConfigError("--seeds must be non-negative");
    opt.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  opt.pad_mode = a.pad ? PadMode::kPad : PadMode::kNoPad;
  const BenchReport rep = run_bench(corpus, model, opt);
  write_text(a.out, rep.to_json() + "\n");
  if (!a.csv.empty()) write_text(a.csv, rep.to_csv());
  out << rep.to_csv();
  return 0;
}

int do_flops(const FlopsArgs& a, std::ostream& out) {
  const ArchSpec arch = find_arch(a.arch, a.arch_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(a.arch_file));
  struct Line {
    std::string label;
    CostReport cost;
  };
  std::vector<Line> lines;
  lines.push_back({"vanilla", prefill_flops(arch, a.vision, a.text)});
  if (a.budget >= 0) {
    lines.push_back({"pruned", prefill_flops(arch, a.budget, a.text)});
    lines.push_back({"oc-pruner", pruner_flops(arch.pruner, a.vision, a.budget, arch.mac_factor)});
  }

  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %8s %6s %12s\n", "row", "vision", "text", "prefill");
  out << "arch " << arch.name << " (L=" << arch.layers << ", d=" << arch.hidden << ", m=" << arch.ffn
      << ", MAC=" << arch.mac_factor << ")\n"
      << buf;
  std::ostringstream csv;
  csv << "row,n_vision,n_text,attention_proj,attention_quadratic,ffn,total\n";
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof buf, "%-10s %8lld %6lld %12s\n", l.label.c_str(), static_cast<long long>(l.cost.n_vision),
                  static_cast<long long>(l.cost.n_text), format_flops(l.cost.total).c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%.0f,%.0f,%.0f,%.0f\n", l.label.c_str(),
                  static_cast<long long>(l.cost.n_vision), static_cast<long long>(l.cost.n_text), l.cost.attention_proj,
                  l.cost.attention_quadratic, l.cost.ffn, l.cost.total);
    csv << buf;
  }
  if (a.budget >= 0) {
    std::snprintf(buf, sizeof buf, "pruned/vanilla %.4f  pruner/vanilla %.6f\n", lines[1].cost.total / lines[0].cost.total,
                  lines[2].cost.total / lines[0].cost.total);
    out << buf;
  }
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  return 0;
}

int do_viz(const VizArgs& a, std::ostream& out) {
  const TokenCorpus corpus = load_corpus(a.corpus);
  std::optional<TokenCorpus> last;
  if (!a.last.empty()) last = load_corpus(a.last);
  const CheckpointBundle model = load_checkpoint(a.checkpoint);
  const std::optional<GridShape> grid = a.grid.empty() ? std::nullopt : std::optional<GridShape>(parse_grid(a.grid));
  std::filesystem::create_directories(a.out_dir);

  std::size_t index = 0;
  int written = 0;
  for (const auto& [ref, fwd] : pair_items(corpus, last ? &*last : nullptr)) {
    if (written >= a.max_items) break;
    PruneInput in;
    in.reference = ref->as_double();
    in.last = fwd->as_double();
    in.budget = a.budget;
    in.pad_mode = a.pad ? PadMode::kPad : PadMode::kNoPad;
    const PruneResult r = prune(in, model.query, model.slot, mix_seed(a.seed, index++));
    const auto path = std::filesystem::path(a.out_dir) / (ref->item_id + ".png");
    write_png(render_prune(r, infer_grid(ref->n(), grid), a.cell), path);
    ++written;
  }
  out << "wrote " << written << " overlays to " << a.out_dir << "\n";
  return 0;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kStorage:
    case ErrorKind::kFormat:
    case ErrorKind::kValidation:
      return 2;
    case ErrorKind::kNumerical:
      return 3;
    default:
      return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object-centric vision token pruning toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a labelled synthetic token corpus (OCVT)");
  cmd_synth->add_option("--out", synth.out, "Output OCVT path")->required();
  cmd_synth->add_option("--objects", synth.spec.n_objects, "Objects per item")->capture_default_str();
  cmd_synth->add_option("--tokens-min", synth.spec.min_tokens_per_object, "Min tokens per object")->capture_default_str();
  cmd_synth->add_option("--tokens-max", synth.spec.max_tokens_per_object, "Max tokens per object")->capture_default_str();
  cmd_synth->add_option("--channels", synth.spec.c, "Token width c")->capture_default_str();
  cmd_synth->add_option("--center-scale", synth.spec.center_scale, "Std of object centers")->capture_default_str();
  cmd_synth->add_option("--noise", synth.spec.noise_scale, "Std of per-token noise")->capture_default_str();
  cmd_synth->add_option("--items", synth.spec.n_items, "Number of items")->capture_default_str();
  cmd_synth->add_option("--total-tokens", synth.spec.total_tokens, "Pin n per item (0 = sum of draws)")->capture_default_str();
  cmd_synth->add_option("--position-scale", synth.spec.position_scale, "Amplitude of the positional code")->capture_default_str();
  cmd_synth->add_option("--tiny-object", synth.spec.tiny_object_tokens, "Token count of object 0 (0 = off)")->capture_default_str();
  synth.spec.seed = kDefaultSeed;
  cmd_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();

  TrainArgs tr;
  tr.config.seed = kDefaultSeed;
  auto* cmd_train = app.add_subcommand("train", "Train the pruner and its reconstruction decoder (OCVC)");
  cmd_train->add_option("--corpus", tr.corpus, "Training corpus (OCVT)")->required();
  cmd_train->add_option("--out", tr.out, "Output checkpoint path")->required();
  cmd_train->add_option("--history", tr.history, "Loss-history CSV (default <out>.loss.csv)");
  cmd_train->add_option("--budgets", tr.budgets, "Comma-separated budget set")->capture_default_str();
  cmd_train->add_option("--steps", tr.config.steps, "Optimizer steps")->capture_default_str();
  cmd_train->add_option("--batch", tr.config.batch_size, "Items per step")->capture_default_str();
  cmd_train->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
  cmd_train->add_option("--seed", tr.config.seed, "Training seed")->capture_default_str();
  cmd_train->add_option("--loss", tr.loss, "mse or aw_mse")->capture_default_str();
  cmd_train->add_option("--optimizer", tr.optimizer, "adam or sgd")->capture_default_str();
  cmd_train->add_option("--grad-clip", tr.config.grad_clip, "Global gradient-norm clip (0 = off)")->capture_default_str();
  cmd_train->add_option("--iterations", tr.config.slot_iterations, "Slot-attention iterations")->capture_default_str();
  cmd_train->add_option("--slot-width", tr.config.slot_width, "Slot-attention width")->capture_default_str();
  cmd_train->add_option("--slot-hidden", tr.config.slot_hidden, "Slot MLP width")->capture_default_str();
  cmd_train->add_option("--dec-width", tr.config.decoder.width, "Decoder width")->capture_default_str();
  cmd_train->add_option("--dec-heads", tr.config.decoder.heads, "Decoder heads")->capture_default_str();
  cmd_train->add_option("--dec-ffn", tr.config.decoder.ffn, "Decoder feed-forward width")->capture_default_str();
  cmd_train->add_option("--dec-layers", tr.config.decoder.layers, "Decoder layers")->capture_default_str();
  cmd_train->add_option("--eval-every", tr.config.eval_every, "Progress interval (steps)")->capture_default_str();

  PruneArgs pr;
  auto* cmd_prune = app.add_subcommand("prune", "Select kept tokens per item; writes {item_id: [indices]} JSON");
  cmd_prune->add_option("--corpus,--reference", pr.reference, "Reference-layer corpus the slots aggregate")->required();
  cmd_prune->add_option("--last", pr.last, "Last-layer corpus to forward (default: the reference corpus)");
  cmd_prune->add_option("--checkpoint", pr.checkpoint, "Trained checkpoint (OCVC)")->required();
  cmd_prune->add_option("--out", pr.out, "Output JSON path")->required();
  cmd_prune->add_option("--budget", pr.budget, "Tokens to keep")->capture_default_str();
  cmd_prune->add_flag("--pad", pr.pad, "Refill to exactly budget tokens (default)");
  cmd_prune->add_flag("--nopad", pr.nopad, "Forward only the distinct elected tokens");
  cmd_prune->add_option("--top-k", pr.top_k, "Tokens elected per slot")->capture_default_str();
  cmd_prune->add_option("--seed", pr.seed, "Query sampling seed")->capture_default_str();

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "Benchmark OC-VTP against baselines; writes a JSON report");
  cmd_eval->add_option("--corpus", ev.corpus, "Evaluation corpus (OCVT)")->required();
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint (OCVC)")->required();
  cmd_eval->add_option("--out", ev.out, "Report JSON path")->required();
  cmd_eval->add_option("--csv", ev.csv, "Optional CSV table path");
  cmd_eval->add_option("--budgets", ev.budgets, "Comma-separated budgets")->required();
  cmd_eval->add_option("--methods", ev.methods, "Comma-separated methods")->capture_default_str();
  cmd_eval->add_option("--seeds", ev.seeds, "Comma-separated seeds")->capture_default_str();
  cmd_eval->add_flag("--pad", ev.pad, "Pad OC-VTP selections to the budget");

  FlopsArgs fl;
  auto* cmd_flops = app.add_subcommand("flops", "Print the analytic prefill FLOPs table");
  cmd_flops->add_option("--arch", fl.arch, "Architecture name")->capture_default_str();
  cmd_flops->add_option("--arch-file", fl.arch_file, "JSON file of architectures keyed by name");
  cmd_flops->add_option("--vision", fl.vision, "Vision tokens before pruning")->capture_default_str();
  cmd_flops->add_option("--text", fl.text, "Text tokens")->capture_default_str();
  cmd_flops->add_option("--budget", fl.budget, "Vision tokens after pruning (adds pruned and pruner rows)");
  cmd_flops->add_option("--csv", fl.csv, "Optional CSV output path");

  VizArgs vz;
  auto* cmd_viz = app.add_subcommand("viz", "Render slot masks and kept tokens as PNG grids");
  cmd_viz->add_option("--corpus,--reference", vz.corpus, "Reference-layer corpus")->required();
  cmd_viz->add_option("--last", vz.last, "Last-layer corpus");
  cmd_viz->add_option("--checkpoint", vz.checkpoint, "Trained checkpoint (OCVC)")->required();
  cmd_viz->add_option("--out-dir", vz.out_dir, "Directory for <item_id>.png")->required();
  cmd_viz->add_option("--budget", vz.budget, "Tokens to keep")->capture_default_str();
  cmd_viz->add_flag("--pad", vz.pad, "Pad to the budget");
  cmd_viz->add_option("--grid", vz.grid, "Grid shape HxW (default: square root of n)");
  cmd_viz->add_option("--items", vz.max_items, "Maximum items to render")->capture_default_str();
  cmd_viz->add_option("--cell", vz.cell, "Cell size in pixels")->capture_default_str();
  cmd_viz->add_option("--seed", vz.seed, "Query sampling seed")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream diag;
    const int code = app.exit(e, out, diag);
    if (code == 0) return 0;
    std::string line = diag.str();
    line.erase(std::find(line.begin(), line.end(), '\n'), line.end());
    err << "error: " << line << "\n";
    return 1;
  }

  try {
    if (cmd_synth->parsed()) return do_synth(synth, out);
    if (cmd_train->parsed()) return do_train(tr, out);
    if (cmd_prune->parsed()) return do_prune(pr, out);
    if (cmd_eval->parsed()) return do_eval(ev, out);
    if (cmd_flops->parsed()) return do_flops(fl, out);
    if (cmd_viz->parsed()) return do_viz(vz, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ocvtp
