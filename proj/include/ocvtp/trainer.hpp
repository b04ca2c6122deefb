// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ocvtp/decoder.hpp"
#include "ocvtp/objective.hpp"
#include "ocvtp/slot_attention.hpp"
#include "ocvtp/token_store.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ocvtp {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  std::vector<int> budget_set = {32, 64, 128, 192};
  int steps = 1000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::kAwMse;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
  int slot_iterations = 3;
  Eigen::Index slot_width = 64;   // attention width d
  Eigen::Index slot_hidden = 128;  // residual MLP width
  DecoderConfig decoder{};
  int eval_every = 100;
  /// Items are grouped by token count so every batch is rectangular; this is
  /// the only supported policy.
  std::string bucketing = "by_n";

  /// Throws ConfigError. corpus_min_n <= 0 skips the budget-vs-n check.
  void validate(Eigen::Index corpus_min_n = 0) const;
};

/// Everything one training run produces.
struct CheckpointBundle {
  QueryDistribution query;
  SlotAttentionParams slot;
  DecoderParams decoder;
  TrainConfig config;
  int step = 0;
  std::vector<double> loss_history;
  std::vector<int> budget_history;

  /// Fresh parameters for token width c.
  static CheckpointBundle init(const TrainConfig& config, Eigen::Index c);

  template <typename F>
  void visit(F&& f) {
    query.visit(f);
    slot.visit(f);
    decoder.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    query.visit(f);
    slot.visit(f);
    decoder.visit(f);
  }

  bool operator==(const CheckpointBundle& other) const;
};

/// Draws one budget per step uniformly from the configured set.
class BudgetSampler {
 public:
  BudgetSampler(std::vector<int> budgets, std::uint64_t seed);
  int next();

 private:
  std::vector<int> budgets_;
  Rng rng_;
};

/// Seeds the trainer uses for item `item` at step `step`.
std::uint64_t query_seed(std::uint64_t seed, int step, std::size_t item);
std::uint64_t permutation_seed(std::uint64_t seed, int step, std::size_t item);

/// One training example fixed in time: tokens, budget and seeds.
struct TrainExample {
  Mat tokens;
  int budget = 0;
  std::uint64_t query_seed = 0;
  std::uint64_t perm_seed = 0;
  /// When non-empty these token weights are used instead of deriving them
  /// from the hard masks (finite-difference checks freeze them).
  Vec frozen_weights;
};

/// Training loss of a batch (mean over examples) recorded on `tape`.
ag::Var batch_loss(ag::Tape& tape, const CheckpointBundle& model, std::span<const TrainExample> batch,
                   LossKind kind);

/// Token weights the loss applies to `example` at the model's current state.
Vec example_weights(const CheckpointBundle& model, const TrainExample& example, LossKind kind);

using ProgressFn = std::function<void(int step, double loss, int budget)>;

/// Trains from scratch. Throws NumericalError naming the step on divergence.
CheckpointBundle train(const TokenCorpus& corpus, const TrainConfig& config, const ProgressFn& progress = {});
/// Continues training `start` for config.steps more steps.
CheckpointBundle train(const TokenCorpus& corpus, CheckpointBundle start, const TrainConfig& config,
                       const ProgressFn& progress = {});

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

/// Central finite differences against analytic gradients of the full
/// training loss on a random subsample of at least `min_params` scalars.
GradCheckReport grad_check(const CheckpointBundle& model, std::span<const TrainExample> batch, double epsilon,
                           std::size_t min_params = 200, std::uint64_t seed = 0);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

}  // namespace ocvtp
