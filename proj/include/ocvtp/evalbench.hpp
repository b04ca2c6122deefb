// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ocvtp/pruner.hpp"
#include "ocvtp/token_store.hpp"
#include "ocvtp/trainer.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ocvtp {

/// Fraction of distinct ground-truth objects with at least one kept token.
/// ConfigError when labels are absent.
double coverage(std::span<const int> kept, const std::optional<std::vector<std::uint32_t>>& labels);
double coverage(const PruneResult& result, const std::optional<std::vector<std::uint32_t>>& labels);

/// Expected coverage of a uniformly random s-subset:
///   (1/K) sum_k [1 - C(n - size_k, s) / C(n, s)].
double random_expected_coverage(std::span<const std::uint32_t> labels, Eigen::Index s);

enum class Method { kOcVtp, kRandom, kNormTopk, kMedoid };
std::string_view to_string(Method m);
/// "ocvtp", "random", "norm_topk", "medoid"; ConfigError otherwise.
Method parse_method(std::string_view text);

/// Token-only baselines. Returns s ascending indices.
///   random    uniform without replacement
///   norm_topk s largest L2 norms (ties to the lowest index)
///   medoid    greedy k-medoid build minimizing the summed distance of every
///             token to its nearest selected token
std::vector<int> baseline_select(Method method, const Mat& tokens, Eigen::Index s, std::uint64_t seed);

struct BenchRow {
  std::string method;
  int budget = 0;
  double coverage = 0.0;         // mean over items (and seeds); NaN without labels
  double recon_error = 0.0;      // frozen decoder conditioned on the kept tokens
  double duplicate_rate = 0.0;   // duplicated elections / slots
  double empty_slot_rate = 0.0;  // slots owning no token / slots
  int evaluations = 0;           // items x seeds

  bool operator==(const BenchRow&) const = default;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::string corpus_fingerprint;
  std::vector<std::uint64_t> seeds;
  /// Enumerated random-selection expected coverage per budget (labelled corpora only).
  std::vector<std::pair<int, double>> random_expected;

  const BenchRow* find(std::string_view method, int budget) const;
  std::string to_json() const;
  static BenchReport from_json(const std::string& text);
  std::string to_csv() const;

  bool operator==(const BenchReport&) const = default;
};

struct BenchOptions {
  std::vector<int> budgets;
  std::vector<Method> methods = {Method::kOcVtp, Method::kRandom, Method::kNormTopk, Method::kMedoid};
  std::vector<std::uint64_t> seeds = {0};
  PadMode pad_mode = PadMode::kNoPad;
};

/// FNV-1a over item ids and token bytes, hex encoded.
std::string corpus_fingerprint(const TokenCorpus& corpus);

/// Kept indices for one item under one method; OC-VTP uses the checkpoint.
std::vector<int> select_for(Method method, const CheckpointBundle& model, const TokenSequence& item, int budget,
                            PadMode pad_mode, std::uint64_t seed, PruneResult* detail = nullptr);

BenchReport run_bench(const TokenCorpus& corpus, const CheckpointBundle& model, const BenchOptions& options);

}  // namespace ocvtp
