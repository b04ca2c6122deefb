// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Attention maps -> kept token indices. Each slot elects its most attended
// token; collisions are deduplicated and, in pad mode, the deficit is refilled
// by column-max attention so exactly `budget` tokens are forwarded.

#include "ocvtp/slot_attention.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ocvtp {

enum class PadMode { kPad, kNoPad };

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct PruneInput {
  Mat reference;  // n x c tokens the slots aggregate over (mid-layer)
  Mat last;       // n x c' tokens that are gathered and forwarded
  Eigen::Index budget = 0;
  PadMode pad_mode = PadMode::kPad;
  /// Tokens elected per slot. budget must be a multiple of it; the slot
  /// count is budget / top_k.
  int top_k = 1;

  void validate() const;
};

struct HardMasks {
  MaskMatrix masks;          // s x n, columns one-hot
  std::vector<int> areas;    // tokens owned per slot; sums to n
};

struct PruneResult {
  std::vector<int> elected;  // raw per-slot picks, slot-major, may repeat
  std::vector<int> indices;  // forwarded token ids, unique and ascending
  Mat kept;                  // rows of `last` at `indices`
  MaskMatrix masks;
  std::vector<int> areas;
  int n_duplicates = 0;
  int n_padded = 0;

  bool operator==(const PruneResult& other) const;
};

/// Row-wise argmax; ties go to the lowest token index.
std::vector<int> select_indices(const Mat& attn);

/// Per slot, the k most attended tokens (descending, ties to the lowest
/// index), concatenated slot-major.
std::vector<int> select_indices_topk(const Mat& attn, int k);

/// Rows of `tokens` in the order of `index`.
Mat gather(const Mat& tokens, std::span<const int> index);

/// Assigns every token to its maximally attending slot (ties to the lowest slot).
HardMasks hard_masks(const Mat& attn);

/// Dedup, pad, and gather given elected indices and the attention they came
/// from. Exposed separately so the budget contract can be checked on
/// arbitrary attention maps.
PruneResult finalize_selection(const Mat& attn, std::vector<int> elected, const Mat& last, Eigen::Index budget,
                               PadMode pad_mode);

/// Full pipeline: sample queries, aggregate over `reference`, elect, finalize.
PruneResult prune(const PruneInput& input, const QueryDistribution& dist, const SlotAttentionParams& params,
                  std::uint64_t seed);

}  // namespace ocvtp
