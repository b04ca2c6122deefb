// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/objective.hpp"

#include "ocvtp/error.hpp"

#include <string>

namespace ocvtp {

namespace {

void require_same_shape(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("loss: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " vs target " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  }
  if (pred.size() == 0) throw ShapeError("loss: empty inputs");
}

Eigen::Index owner_of(const MaskMatrix& masks, Eigen::Index j) {
  for (Eigen::Index i = 0; i < masks.rows(); ++i) {
    if (masks(i, j)) return i;
  }
  return -1;
}

}  // namespace

std::string_view to_string(LossKind kind) { return kind == LossKind::kMse ? "mse" : "aw_mse"; }

LossKind parse_loss_kind(std::string_view text) {
  if (text == "mse") return LossKind::kMse;
  if (text == "aw_mse" || text == "aw-mse") return LossKind::kAwMse;
  throw ConfigError("unknown loss kind '" + std::string(text) + "' (expected mse or aw_mse)");
}

Vec token_errors(const Mat& pred, const Mat& target) {
  require_same_shape(pred, target);
  return (pred - target).array().square().rowwise().mean();
}

LossReport mse(const Mat& pred, const Mat& target) {
  LossReport r;
  r.kind = LossKind::kMse;
  r.value = token_errors(pred, target).mean();
  r.per_slot_contrib = {r.value};
  return r;
}

LossReport mse(const Mat& pred, const Mat& target, const MaskMatrix& masks) {
  const Vec e = token_errors(pred, target);
  if (masks.cols() != e.size()) throw ShapeError("mse: mask width differs from token count");
  LossReport r;
  r.kind = LossKind::kMse;
  r.per_slot_contrib.assign(static_cast<std::size_t>(masks.rows()), 0.0);
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    const Eigen::Index owner = owner_of(masks, j);
    if (owner < 0) throw ValidationError("mse: token " + std::to_string(j) + " has no owning slot");
    r.per_slot_contrib[static_cast<std::size_t>(owner)] += e(j) / static_cast<double>(e.size());
  }
  r.value = e.mean();
  return r;
}

void validate_masks(const MaskMatrix& masks, std::span<const int> areas) {
  if (static_cast<Eigen::Index>(areas.size()) != masks.rows()) {
    throw ValidationError("masks: " + std::to_string(areas.size()) + " areas for " + std::to_string(masks.rows()) +
                          " slots");
  }
  std::vector<int> counted(areas.size(), 0);
  for (Eigen::Index j = 0; j < masks.cols(); ++j) {
    int ones = 0;
    for (Eigen::Index i = 0; i < masks.rows(); ++i) {
      if (masks(i, j) > 1) throw ValidationError("masks: entries must be 0 or 1");
      if (masks(i, j)) {
        ++ones;
        ++counted[static_cast<std::size_t>(i)];
      }
    }
    if (ones != 1) throw ValidationError("masks: column " + std::to_string(j) + " is not one-hot");
  }
  for (std::size_t i = 0; i < areas.size(); ++i) {
    if (counted[i] != areas[i]) {
      throw ValidationError("masks: slot " + std::to_string(i) + " area " + std::to_string(areas[i]) +
                            " but mask owns " + std::to_string(counted[i]) + " tokens");
    }
  }
}

LossReport aw_mse(const Mat& pred, const Mat& target, const MaskMatrix& masks, std::span<const int> areas) {
  const Vec e = token_errors(pred, target);
  if (masks.cols() != e.size()) throw ShapeError("aw_mse: mask width differs from token count");
  validate_masks(masks, areas);
  const Vec w = token_weights(LossKind::kAwMse, e.size(), &masks, areas);

  LossReport r;
  r.kind = LossKind::kAwMse;
  r.per_slot_contrib.assign(areas.size(), 0.0);
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    r.per_slot_contrib[static_cast<std::size_t>(owner_of(masks, j))] += w(j) * e(j);
  }
  for (double v : r.per_slot_contrib) r.value += v;
  return r;
}

Vec token_weights(LossKind kind, Eigen::Index n, const MaskMatrix* masks, std::span<const int> areas) {
  if (kind == LossKind::kMse) return Vec::Constant(n, 1.0 / static_cast<double>(n));
  if (masks == nullptr) throw ConfigError("aw_mse requires hard masks");
  if (masks->cols() != n) throw ShapeError("aw_mse: mask width differs from token count");
  int nonempty = 0;
  for (int a : areas) nonempty += a > 0 ? 1 : 0;
  if (nonempty == 0) throw ValidationError("aw_mse: every slot is empty");
  Vec w(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index owner = owner_of(*masks, j);
    if (owner < 0) throw ValidationError("aw_mse: token " + std::to_string(j) + " has no owning slot");
    w(j) = 1.0 / (static_cast<double>(areas[static_cast<std::size_t>(owner)]) * nonempty);
  }
  return w;
}

}  // namespace ocvtp
