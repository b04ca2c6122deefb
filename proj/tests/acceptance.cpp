// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include "ocvtp/cost_model.hpp"
#include "ocvtp/evalbench.hpp"
#include "ocvtp/objective.hpp"
#include "ocvtp/pruner.hpp"
#include "ocvtp/random.hpp"
#include "ocvtp/slot_attention.hpp"
#include "ocvtp/token_store.hpp"
#include "ocvtp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ocvtp {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double as_printed_tera(double flops) { return std::round(flops / 1e12 * 100.0) / 100.0; }

Outcome flops_values() {
  const auto t0 = Clock::now();
  const ArchSpec v15 = find_arch("llava-1.5");
  const ArchSpec next = find_arch("llava-next");
  struct Row {
    const ArchSpec* arch;
    std::int64_t n;
    double published;
  };
  const Row rows[] = {{&v15, 576, 6.30}, {&v15, 64, 0.97}, {&next, 2880, 33.76}, {&next, 160, 1.95}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const double got = prefill_flops(*r.arch, r.n, 32).total;
    const bool match = as_printed_tera(got) == r.published;
    ok = ok && match;
    detail += fmt("%s %lld+32: %.4f T (published %.2f)%s; ", r.arch->name.c_str(), static_cast<long long>(r.n),
                  got / 1e12, r.published, match ? "" : " MISMATCH");
  }
  const double dt = seconds_since(t0);
  ok = ok && dt < 1.0;
  return {ok, detail + fmt("%.3f s", dt)};
}

Outcome flops_ratios() {
  const ArchSpec v15 = find_arch("llava-1.5");
  const ArchSpec next = find_arch("llava-next");
  const double r15 = prefill_flops(v15, 64, 32).total / prefill_flops(v15, 576, 32).total;
  const double rn = prefill_flops(next, 160, 32).total / prefill_flops(next, 2880, 32).total;
  const bool ok = std::abs(r15 - 0.154) <= 0.01 && std::abs(rn - 0.058) <= 0.01;
  return {ok, fmt("llava-1.5@64 %.4f (target 0.154), llava-next@160 %.4f (target 0.058), tolerance 0.01", r15, rn)};
}

Outcome pruner_overhead() {
  const ArchSpec v15 = find_arch("llava-1.5");
  const ArchSpec next = find_arch("llava-next");
  const double o15 = pruner_flops(v15.pruner, 576, 64, v15.mac_factor).total / prefill_flops(v15, 576, 32).total;
  const double on = pruner_flops(next.pruner, 2880, 160, next.mac_factor).total / prefill_flops(next, 2880, 32).total;
  return {o15 < 0.005 && on < 0.005, fmt("llava-1.5 %.4f%%, llava-next %.4f%% of vanilla prefill", 100 * o15, 100 * on)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.n_objects = 3;
  spec.min_tokens_per_object = 4;
  spec.max_tokens_per_object = 4;
  spec.c = 8;
  spec.n_items = 2;
  const TokenCorpus corpus = synth_corpus(spec);
  TrainConfig cfg;
  cfg.budget_set = {3};
  cfg.loss_kind = LossKind::kAwMse;
  cfg.slot_width = 8;
  cfg.slot_hidden = 16;
  cfg.decoder.c = corpus.c();
  cfg.decoder.width = 16;
  cfg.decoder.heads = 2;
  cfg.decoder.ffn = 32;
  cfg.decoder.n_max = 12;
  const CheckpointBundle model = CheckpointBundle::init(cfg, corpus.c());
  std::vector<TrainExample> batch;
  for (std::size_t k = 0; k < corpus.items.size(); ++k) {
    TrainExample ex;
    ex.tokens = corpus.items[k].as_double();
    ex.budget = 3;
    ex.query_seed = query_seed(1, 0, k);
    ex.perm_seed = permutation_seed(1, 0, k);
    batch.push_back(std::move(ex));
  }
  const GradCheckReport r = grad_check(model, batch, 1e-5, 1000, 2);
  const double dt = seconds_since(t0);
  return {r.max_relative_error <= 1e-4 && dt < 60.0,
          fmt("max relative error %.3g over %zu scalars (worst %s), %.1f s", r.max_relative_error, r.checked,
              r.worst_parameter.c_str(), dt)};
}

Outcome normalization() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index s = std::uniform_int_distribution<Eigen::Index>(1, 10)(rng);
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, 60)(rng);
    const Eigen::Index c = std::uniform_int_distribution<Eigen::Index>(2, 16)(rng);
    const int iters = std::uniform_int_distribution<int>(1, 5)(rng);
    const SlotAttentionParams p = SlotAttentionParams::init(c, c, 2 * c, iters, rng());
    const double scale = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    const SlotState st = aggregate(p, scale * standard_normal(s, c, rng), scale * standard_normal(n, c, rng));
    for (const Mat& a : st.iteration_attn) {
      worst = std::max(worst, (a.colwise().sum().array() - 1.0).abs().maxCoeff());
    }
  }
  return {worst <= 1e-6, fmt("1000 aggregations, max |column sum - 1| = %.3g", worst)};
}

Outcome aw_degeneracy() {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int s = std::uniform_int_distribution<int>(1, 8)(rng);
    const int per = std::uniform_int_distribution<int>(1, 12)(rng);
    const Eigen::Index n = s * per;
    const Eigen::Index c = std::uniform_int_distribution<Eigen::Index>(1, 16)(rng);
    std::vector<int> owner(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) owner[static_cast<std::size_t>(j)] = static_cast<int>(j % s);
    std::shuffle(owner.begin(), owner.end(), rng);
    MaskMatrix masks = MaskMatrix::Zero(s, n);
    for (Eigen::Index j = 0; j < n; ++j) masks(owner[static_cast<std::size_t>(j)], j) = 1;
    const std::vector<int> areas(static_cast<std::size_t>(s), per);
    const Mat pred = standard_normal(n, c, rng), target = standard_normal(n, c, rng);
    const double a = aw_mse(pred, target, masks, areas).value;
    const double m = mse(pred, target).value;
    worst = std::max(worst, std::abs(a - m) / std::max(std::abs(m), 1e-300));
  }
  return {worst <= 1e-12, fmt("100 uniform-area instances, max relative gap %.3g", worst)};
}

Outcome budget_contract() {
  Rng rng(7);
  int failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, 80)(rng);
    const Eigen::Index s = std::uniform_int_distribution<Eigen::Index>(1, n)(rng);
    const PadMode mode = (trial % 2) ? PadMode::kPad : PadMode::kNoPad;
    Mat logits = standard_normal(s, n, rng) * std::uniform_real_distribution<double>(0.0, 5.0)(rng);
    if (trial % 7 == 0) logits = logits.array().round();  // force ties
    Mat attn = logits.array().exp();
    attn.array().rowwise() /= attn.colwise().sum().array();
    const Mat last = standard_normal(n, 3, rng);
    const PruneResult r = finalize_selection(attn, select_indices(attn), last, s, mode);
    const std::set<int> unique(r.indices.begin(), r.indices.end());
    bool ok = unique.size() == r.indices.size();
    ok = ok && (mode == PadMode::kPad ? static_cast<Eigen::Index>(r.indices.size()) == s
                                      : static_cast<Eigen::Index>(r.indices.size()) <= s);
    ok = ok && r.kept.rows() == static_cast<Eigen::Index>(r.indices.size());
    int area_sum = 0;
    for (int a : r.areas) area_sum += a;
    ok = ok && area_sum == n;
    for (Eigen::Index j = 0; j < n; ++j) ok = ok && r.masks.col(j).cast<int>().sum() == 1;
    failures += ok ? 0 : 1;
  }
  return {failures == 0, fmt("1000 random (A, s, pad_mode) instances, %d violations", failures)};
}

Outcome multi_budget() {
  SynthSpec spec;
  spec.n_objects = 4;
  spec.min_tokens_per_object = 8;
  spec.max_tokens_per_object = 8;
  spec.c = 8;
  spec.n_items = 8;
  const TokenCorpus corpus = synth_corpus(spec);
  TrainConfig cfg;
  cfg.budget_set = {8, 16, 32};
  cfg.steps = 4000;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-3;
  cfg.slot_width = 8;
  cfg.slot_hidden = 16;
  cfg.decoder.width = 8;
  cfg.decoder.heads = 1;
  cfg.decoder.ffn = 16;
  cfg.decoder.layers = 1;
  const CheckpointBundle model = train(corpus, cfg);
  std::map<int, int> hist;
  for (int b : model.budget_history) ++hist[b];
  double worst = 0.0;
  for (int b : cfg.budget_set) worst = std::max(worst, std::abs(hist[b] / 4000.0 - 1.0 / 3.0));
  bool ok = worst <= 0.03 && hist.size() == 3;
  for (int b : cfg.budget_set) {
    for (const auto& it : corpus.items) {
      for (PadMode mode : {PadMode::kPad, PadMode::kNoPad}) {
        PruneInput in{it.as_double(), it.as_double(), b, mode, 1};
        const PruneResult r = prune(in, model.query, model.slot, 3);
        const auto sz = static_cast<int>(r.indices.size());
        ok = ok && (mode == PadMode::kPad ? sz == b : sz <= b && sz >= 1);
      }
    }
  }
  return {ok, fmt("budget frequencies 8:%d 16:%d 32:%d of 4000 (max deviation %.4f); pruned at every budget from one "
                  "checkpoint",
                  hist[8], hist[16], hist[32], worst)};
}

// Training recipe shared by the representativeness and ablation checks.
TrainConfig oracle_config(LossKind kind) {
  TrainConfig cfg;
  cfg.budget_set = {8};
  cfg.steps = 4000;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.seed = 2026;
  cfg.loss_kind = kind;
  cfg.decoder.width = 64;
  cfg.decoder.heads = 4;
  cfg.decoder.ffn = 128;
  cfg.eval_every = 1000;
  return cfg;
}

Outcome representativeness() {
  const auto t0 = Clock::now();
  SynthSpec spec;  // defaults: 64 items, 8 objects x 12 tokens, c = 64
  const TokenCorpus corpus = synth_corpus(spec);
  const CheckpointBundle model = train(corpus, oracle_config(LossKind::kAwMse));
  BenchOptions opt;
  opt.budgets = {8};
  opt.methods = {Method::kOcVtp, Method::kRandom};
  const BenchReport rep = run_bench(corpus, model, opt);
  const double dt = seconds_since(t0);
  const BenchRow* oc = rep.find("ocvtp", 8);
  const BenchRow* rnd = rep.find("random", 8);
  double expected = 0.0;
  for (const auto& it : corpus.items) expected += random_expected_coverage(*it.labels, 8);
  expected /= static_cast<double>(corpus.items.size());
  const bool ok = oc->coverage >= 0.9 && oc->coverage > expected && oc->recon_error <= rnd->recon_error && dt < 600.0;
  return {ok, fmt("%zu items, s=8: coverage %.4f (need >= 0.9), random expectation %.4f, recon %.4f vs random %.4f, "
                  "pipeline %.0f s",
                  corpus.items.size(), oc->coverage, expected, oc->recon_error, rnd->recon_error, dt)};
}

double tiny_cluster_rate(const TokenCorpus& corpus, const CheckpointBundle& model) {
  int hits = 0;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& it = corpus.items[i];
    PruneInput in{it.as_double(), it.as_double(), 8, PadMode::kNoPad, 1};
    const PruneResult r = prune(in, model.query, model.slot, mix_seed(0, i));
    bool hit = false;
    for (int j : r.indices) hit = hit || (*it.labels)[static_cast<std::size_t>(j)] == 0;
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.items.size());
}

Outcome loss_ablation() {
  SynthSpec spec;
  spec.total_tokens = 96;
  spec.tiny_object_tokens = 2;
  const TokenCorpus corpus = synth_corpus(spec);
  const CheckpointBundle aw = train(corpus, oracle_config(LossKind::kAwMse));
  const CheckpointBundle plain = train(corpus, oracle_config(LossKind::kMse));
  const double ra = tiny_cluster_rate(corpus, aw), rm = tiny_cluster_rate(corpus, plain);
  return {ra >= 0.8 && rm < ra,
          fmt("tiny 2-token cluster kept at s=8 on %.1f%% of items with AW-MSE (need >= 80%%) vs %.1f%% with MSE", 100 * ra,
              100 * rm)};
}

Outcome determinism() {
  SynthSpec spec;
  spec.n_objects = 4;
  spec.min_tokens_per_object = 5;
  spec.max_tokens_per_object = 5;
  spec.c = 16;
  spec.n_items = 12;
  const TokenCorpus corpus = synth_corpus(spec);
  TrainConfig cfg;
  cfg.budget_set = {4, 8};
  cfg.steps = 60;
  cfg.batch_size = 4;
  cfg.slot_width = 16;
  cfg.slot_hidden = 32;
  cfg.decoder.width = 32;
  cfg.decoder.heads = 2;
  cfg.decoder.ffn = 64;
  const CheckpointBundle a = train(corpus, cfg);
  const CheckpointBundle b = train(corpus, cfg);
  const auto path = std::filesystem::temp_directory_path() / "ocvtp_acceptance.ocvc";
  save_checkpoint(a, path);
  const CheckpointBundle c = load_checkpoint(path);
  std::filesystem::remove(path);
  bool ok = a == b && a == c && a.loss_history == b.loss_history && a.loss_history == c.loss_history;
  int compared = 0;
  for (const auto& it : corpus.items) {
    for (int budget : cfg.budget_set) {
      for (PadMode mode : {PadMode::kPad, PadMode::kNoPad}) {
        PruneInput in{it.as_double(), it.as_double(), budget, mode, 1};
        const PruneResult ra = prune(in, a.query, a.slot, 11);
        ok = ok && ra == prune(in, b.query, b.slot, 11) && ra == prune(in, c.query, c.slot, 11);
        ++compared;
      }
    }
  }
  return {ok, fmt("two seeded runs and a save/load round-trip: checkpoints %s, %d PruneResults compared",
                  (a == b && a == c) ? "bit-identical" : "DIFFER", compared)};
}

}  // namespace
}  // namespace ocvtp

int main(int argc, char** argv) {
  using namespace ocvtp;
  // Optional arguments restrict the run to the listed criterion numbers.
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::atoi(argv[i])));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"FLOPs reproduction", flops_values},
      {"FLOPs ratios", flops_ratios},
      {"pruner overhead bound", pruner_overhead},
      {"gradient correctness", gradient_check},
      {"normalization invariant", normalization},
      {"AW-MSE degeneracy", aw_degeneracy},
      {"budget contract", budget_contract},
      {"train-once multi-budget", multi_budget},
      {"representativeness oracle", representativeness},
      {"loss ablation direction", loss_ablation},
      {"determinism and persistence", determinism},
  };
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
