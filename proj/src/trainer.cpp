// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/trainer.hpp"

#include "ocvtp/error.hpp"
#include "ocvtp/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>

namespace ocvtp {

namespace {

constexpr std::uint64_t kBudgetStream = 0xb6d6e7;
constexpr std::uint64_t kBatchStream = 0xba7c;

// Denominator floor for the finite-difference relative error.
constexpr double kRelativeErrorFloor = 1e-6;

struct AdamState {
  std::vector<Mat> m, v;
  long t = 0;
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const CheckpointBundle& model) : cfg_(cfg) {
    model.visit([&](const std::string&, const Mat& p) {
      adam_.m.push_back(Mat::Zero(p.rows(), p.cols()));
      adam_.v.push_back(Mat::Zero(p.rows(), p.cols()));
    });
  }

  void step(CheckpointBundle& model, const std::vector<Mat>& grads) {
    double scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (const Mat& g : grads) sq += g.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }
    ++adam_.t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_.t));
    std::size_t k = 0;
    model.visit([&](const std::string&, Mat& p) {
      const Mat g = scale * grads[k];
      if (cfg_.optimizer == OptimizerKind::kSgd) {
        p -= cfg_.learning_rate * g;
      } else {
        adam_.m[k] = b1 * adam_.m[k] + (1.0 - b1) * g;
        adam_.v[k] = b2 * adam_.v[k] + (1.0 - b2) * g.cwiseProduct(g);
        p.array() -= cfg_.learning_rate * (adam_.m[k].array() / c1) /
                     ((adam_.v[k].array() / c2).sqrt() + eps);
      }
      ++k;
    });
  }

 private:
  const TrainConfig& cfg_;
  AdamState adam_;
};

/// Item indices grouped by token count.
std::vector<std::vector<std::size_t>> buckets_by_n(const TokenCorpus& corpus) {
  std::map<Eigen::Index, std::vector<std::size_t>> by_n;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) by_n[corpus.items[i].n()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [n, idx] : by_n) out.push_back(std::move(idx));
  return out;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kRelativeErrorFloor);
}

}  // namespace

void TrainConfig::validate(Eigen::Index corpus_min_n) const {
  if (budget_set.empty()) throw ConfigError("train: budget_set must not be empty");
  for (int b : budget_set) {
    if (b < 1) throw ConfigError("train: budgets must be >= 1");
    if (corpus_min_n > 0 && b > corpus_min_n) {
      throw ConfigError("train: budget " + std::to_string(b) + " exceeds the smallest item (n=" +
                        std::to_string(corpus_min_n) + ")");
    }
  }
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
  if (slot_iterations < 1) throw ConfigError("train: slot_iterations must be >= 1");
  if (slot_width < 1 || slot_hidden < 1) throw ConfigError("train: slot widths must be positive");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (bucketing != "by_n") throw ConfigError("train: unsupported bucketing policy '" + bucketing + "'");
  decoder.validate();
}

CheckpointBundle CheckpointBundle::init(const TrainConfig& config, Eigen::Index c) {
  CheckpointBundle b;
  b.config = config;
  b.config.decoder.c = c;
  b.query = QueryDistribution::init(c, config.seed);
  b.slot = SlotAttentionParams::init(c, config.slot_width, config.slot_hidden, config.slot_iterations, config.seed);
  b.decoder = DecoderParams::init(b.config.decoder, config.seed);
  return b;
}

bool CheckpointBundle::operator==(const CheckpointBundle& other) const {
  if (step != other.step || loss_history != other.loss_history || budget_history != other.budget_history) return false;
  if (config_to_json(config) != config_to_json(other.config)) return false;
  std::vector<const Mat*> mine, theirs;
  visit([&](const std::string&, const Mat& m) { mine.push_back(&m); });
  other.visit([&](const std::string&, const Mat& m) { theirs.push_back(&m); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols()) return false;
    if (std::memcmp(mine[i]->data(), theirs[i]->data(), sizeof(double) * static_cast<std::size_t>(mine[i]->size())) != 0) {
      return false;
    }
  }
  return true;
}

BudgetSampler::BudgetSampler(std::vector<int> budgets, std::uint64_t seed)
    : budgets_(std::move(budgets)), rng_(mix_seed(seed, kBudgetStream)) {
  if (budgets_.empty()) throw ConfigError("budget sampler: empty budget set");
}

int BudgetSampler::next() {
  std::uniform_int_distribution<std::size_t> pick(0, budgets_.size() - 1);
  return budgets_[pick(rng_)];
}

std::uint64_t query_seed(std::uint64_t seed, int step, std::size_t item) {
  return mix_seed(seed, 0x100000000ULL + static_cast<std::uint64_t>(step), item);
}

std::uint64_t permutation_seed(std::uint64_t seed, int step, std::size_t item) {
  return mix_seed(seed, 0x200000000ULL + static_cast<std::uint64_t>(step), item);
}

Vec example_weights(const CheckpointBundle& model, const TrainExample& ex, LossKind kind) {
  if (ex.frozen_weights.size() != 0) return ex.frozen_weights;
  const Eigen::Index n = ex.tokens.rows();
  if (kind == LossKind::kMse) return token_weights(kind, n, nullptr, {});
  const Mat q = sample_queries(model.query, ex.budget, ex.query_seed);
  const SlotState st = aggregate(model.slot, q, ex.tokens);
  const HardMasks hm = hard_masks(st.attn);
  return token_weights(kind, n, &hm.masks, hm.areas);
}

ag::Var batch_loss(ag::Tape& tape, const CheckpointBundle& model, std::span<const TrainExample> batch, LossKind kind) {
  if (batch.empty()) throw ConfigError("batch_loss: empty batch");
  std::vector<ag::Var> losses;
  for (const TrainExample& ex : batch) {
    const Mat noise = query_noise(ex.budget, model.query.c(), ex.query_seed);
    ag::Var queries = sample_queries(tape, model.query, noise);
    SlotGraph sg = aggregate(tape, model.slot, queries, tape.constant(ex.tokens));
    Vec weights;
    if (ex.frozen_weights.size() != 0) {
      weights = ex.frozen_weights;
    } else if (kind == LossKind::kMse) {
      weights = token_weights(kind, ex.tokens.rows(), nullptr, {});
    } else {
      // Masks and areas are constants of the step: no gradient through argmax.
      const HardMasks hm = hard_masks(sg.attn.value());
      weights = token_weights(kind, ex.tokens.rows(), &hm.masks, hm.areas);
    }
    DecoderGraph dg = reconstruct(tape, model.decoder, sg.slots, ex.tokens, ex.perm_seed);
    losses.push_back(ag::weighted_row_sq_error(dg.prediction, ex.tokens, weights));
  }
  return ag::affine(ag::sum_scalars(losses), 1.0 / static_cast<double>(batch.size()));
}

CheckpointBundle train(const TokenCorpus& corpus, const TrainConfig& config, const ProgressFn& progress) {
  if (corpus.items.empty()) throw ConfigError("train: empty corpus");
  TrainConfig cfg = config;
  cfg.decoder.c = corpus.c();
  cfg.decoder.n_max = std::max(cfg.decoder.n_max, corpus.max_n());
  return train(corpus, CheckpointBundle::init(cfg, corpus.c()), cfg, progress);
}

CheckpointBundle train(const TokenCorpus& corpus, CheckpointBundle model, const TrainConfig& config,
                       const ProgressFn& progress) {
  if (corpus.items.empty()) throw ConfigError("train: empty corpus");
  corpus.validate();
  config.validate(corpus.min_n());
  if (corpus.c() != model.query.c()) throw ShapeError("train: corpus width differs from the model");
  if (corpus.max_n() > model.decoder.config.n_max) {
    throw CapacityError("train: corpus has items longer than the decoder's n_max");
  }

  const auto buckets = buckets_by_n(corpus);
  std::vector<double> bucket_weight;
  for (const auto& b : buckets) bucket_weight.push_back(static_cast<double>(b.size()));

  BudgetSampler budgets(config.budget_set, config.seed);
  // Skip the draws a resumed run has already consumed.
  for (int i = 0; i < model.step; ++i) budgets.next();
  Optimizer opt(config, model);

  const int first = model.step;
  for (int step = first; step < first + config.steps; ++step) {
    const int budget = budgets.next();
    Rng batch_rng(mix_seed(config.seed, kBatchStream, static_cast<std::uint64_t>(step)));
    std::discrete_distribution<std::size_t> pick_bucket(bucket_weight.begin(), bucket_weight.end());
    const auto& bucket = buckets[pick_bucket(batch_rng)];

    std::vector<std::size_t> chosen;
    if (static_cast<int>(bucket.size()) >= config.batch_size) {
      std::vector<std::size_t> pool = bucket;
      std::shuffle(pool.begin(), pool.end(), batch_rng);
      chosen.assign(pool.begin(), pool.begin() + config.batch_size);
    } else {
      std::uniform_int_distribution<std::size_t> any(0, bucket.size() - 1);
      for (int k = 0; k < config.batch_size; ++k) chosen.push_back(bucket[any(batch_rng)]);
    }

    std::vector<TrainExample> batch;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      TrainExample ex;
      ex.tokens = corpus.items[chosen[k]].as_double();
      ex.budget = budget;
      ex.query_seed = query_seed(config.seed, step, k);
      ex.perm_seed = permutation_seed(config.seed, step, k);
      batch.push_back(std::move(ex));
    }

    ag::Tape tape;
    ag::Var loss = batch_loss(tape, model, batch, config.loss_kind);
    if (!std::isfinite(loss.scalar())) {
      throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    }
    tape.backward(loss);
    std::vector<Mat> grads;
    model.visit([&](const std::string&, const Mat& p) { grads.push_back(tape.grad_of(&p)); });
    for (const Mat& g : grads) {
      if (!g.allFinite()) throw NumericalError("train: non-finite gradient at step " + std::to_string(step));
    }
    opt.step(model, grads);

    model.loss_history.push_back(loss.scalar());
    model.budget_history.push_back(budget);
    model.step = step + 1;
    if (progress && ((step + 1) % config.eval_every == 0 || step + 1 == first + config.steps)) {
      progress(step + 1, loss.scalar(), budget);
    }
  }
  model.config = config;
  model.config.decoder = model.decoder.config;
  return model;
}

GradCheckReport grad_check(const CheckpointBundle& model, std::span<const TrainExample> batch, double epsilon,
                           std::size_t min_params, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be > 0");
  if (batch.empty()) throw ConfigError("grad_check: empty batch");
  const LossKind kind = model.config.loss_kind;

  // Freeze the area weights at the unperturbed point so the loss is smooth.
  std::vector<TrainExample> frozen(batch.begin(), batch.end());
  for (auto& ex : frozen) ex.frozen_weights = example_weights(model, ex, kind);

  CheckpointBundle work = model;
  ag::Tape tape;
  ag::Var loss = batch_loss(tape, work, frozen, kind);
  tape.backward(loss);

  struct Slot {
    std::string name;
    Mat* param;
    Mat grad;
  };
  std::vector<Slot> slots;
  work.visit([&](const std::string& name, Mat& p) { slots.push_back({name, &p, tape.grad_of(&p)}); });

  // Sample (matrix, entry) pairs uniformly over all scalars, every matrix at
  // least once so no parameter group escapes the check.
  Rng rng(mix_seed(seed, 0x6c));
  std::vector<std::pair<std::size_t, Eigen::Index>> picks;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    std::uniform_int_distribution<Eigen::Index> entry(0, slots[s].param->size() - 1);
    picks.emplace_back(s, entry(rng));
  }
  Eigen::Index total = 0;
  for (const auto& s : slots) total += s.param->size();
  std::uniform_int_distribution<Eigen::Index> flat(0, total - 1);
  while (picks.size() < min_params) {
    Eigen::Index f = flat(rng);
    std::size_t s = 0;
    while (f >= slots[s].param->size()) f -= slots[s++].param->size();
    picks.emplace_back(s, f);
  }

  auto eval = [&]() {
    ag::Tape t;
    return batch_loss(t, work, frozen, kind).scalar();
  };

  GradCheckReport report;
  for (const auto& [s, idx] : picks) {
    double& x = slots[s].param->data()[idx];
    const double saved = x;
    x = saved + epsilon;
    const double plus = eval();
    x = saved - epsilon;
    const double minus = eval();
    x = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double analytic = slots[s].grad.data()[idx];
    const double err = relative_error(analytic, numeric);
    if (err > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = std::max(report.max_relative_error, err);
      if (err >= report.max_relative_error) report.worst_parameter = slots[s].name + "[" + std::to_string(idx) + "]";
    }
    ++report.checked;
  }
  return report;
}

}  // namespace ocvtp
