// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reconstruction losses.
//
// Per-token error e_j is the squared error averaged over channels.
//   mse    = mean_j e_j
//   aw_mse = mean over nonempty slots i of (1/area_i) * sum_{j owned by i} e_j
// With equal areas the two coincide exactly.

#include "ocvtp/pruner.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ocvtp {

enum class LossKind { kMse, kAwMse };

std::string_view to_string(LossKind kind);
/// Accepts "mse" and "aw_mse" (also "aw-mse"); throws ConfigError otherwise.
LossKind parse_loss_kind(std::string_view text);

struct LossReport {
  double value = 0.0;
  /// Additive decomposition of value. For mse without masks this is a single
  /// entry; with masks (or for aw_mse) it has one entry per slot.
  std::vector<double> per_slot_contrib;
  LossKind kind = LossKind::kMse;
};

/// Channel-averaged squared error per token (length n).
Vec token_errors(const Mat& pred, const Mat& target);

LossReport mse(const Mat& pred, const Mat& target);
/// mse with the per-slot breakdown taken from the hard masks.
LossReport mse(const Mat& pred, const Mat& target, const MaskMatrix& masks);
LossReport aw_mse(const Mat& pred, const Mat& target, const MaskMatrix& masks, std::span<const int> areas);

/// Throws ValidationError unless every mask column is one-hot and areas
/// match the column counts.
void validate_masks(const MaskMatrix& masks, std::span<const int> areas);

/// Per-token weights w such that loss = sum_j w_j e_j. The masks are needed
/// for aw_mse only; ConfigError if they are missing.
Vec token_weights(LossKind kind, Eigen::Index n, const MaskMatrix* masks, std::span<const int> areas);

}  // namespace ocvtp
