// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/pruner.hpp"

#include "ocvtp/error.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace ocvtp {

void PruneInput::validate() const {
  if (reference.rows() != last.rows()) {
    throw ShapeError("prune: reference has " + std::to_string(reference.rows()) + " tokens but last has " +
                     std::to_string(last.rows()));
  }
  if (budget < 1 || budget > reference.rows()) {
    throw ConfigError("prune: budget " + std::to_string(budget) + " outside [1, " + std::to_string(reference.rows()) +
                      "]");
  }
  if (top_k < 1 || budget % top_k != 0) {
    throw ConfigError("prune: budget must be a positive multiple of top_k");
  }
}

bool PruneResult::operator==(const PruneResult& other) const {
  return elected == other.elected && indices == other.indices && kept == other.kept && masks == other.masks &&
         areas == other.areas && n_duplicates == other.n_duplicates && n_padded == other.n_padded;
}

std::vector<int> select_indices(const Mat& attn) {
  if (attn.rows() == 0 || attn.cols() == 0) throw ShapeError("select_indices: empty attention map");
  std::vector<int> out(static_cast<std::size_t>(attn.rows()));
  for (Eigen::Index i = 0; i < attn.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < attn.cols(); ++j) {
      if (attn(i, j) > attn(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> select_indices_topk(const Mat& attn, int k) {
  if (attn.rows() == 0 || attn.cols() == 0) throw ShapeError("select_indices_topk: empty attention map");
  if (k < 1 || k > attn.cols()) {
    throw ConfigError("select_indices_topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(attn.cols()) +
                      "]");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(attn.rows() * k));
  std::vector<int> order(static_cast<std::size_t>(attn.cols()));
  for (Eigen::Index i = 0; i < attn.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      if (attn(i, a) != attn(i, b)) return attn(i, a) > attn(i, b);
      return a < b;
    });
    out.insert(out.end(), order.begin(), order.begin() + k);
  }
  return out;
}

Mat gather(const Mat& tokens, std::span<const int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), tokens.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= tokens.rows()) {
      throw BoundsError("gather: index " + std::to_string(index[k]) + " outside [0, " + std::to_string(tokens.rows()) +
                        ")");
    }
    out.row(static_cast<Eigen::Index>(k)) = tokens.row(index[k]);
  }
  return out;
}

HardMasks hard_masks(const Mat& attn) {
  HardMasks hm;
  hm.masks = MaskMatrix::Zero(attn.rows(), attn.cols());
  hm.areas.assign(static_cast<std::size_t>(attn.rows()), 0);
  if (attn.rows() == 0) return hm;
  for (Eigen::Index j = 0; j < attn.cols(); ++j) {
    Eigen::Index owner = 0;
    for (Eigen::Index i = 1; i < attn.rows(); ++i) {
      if (attn(i, j) > attn(owner, j)) owner = i;
    }
    hm.masks(owner, j) = 1;
    ++hm.areas[static_cast<std::size_t>(owner)];
  }
  return hm;
}

PruneResult finalize_selection(const Mat& attn, std::vector<int> elected, const Mat& last, Eigen::Index budget,
                               PadMode pad_mode) {
  const Eigen::Index n = attn.cols();
  if (last.rows() != n) throw ShapeError("finalize_selection: attention and tokens disagree on n");
  if (budget < 1 || budget > n) throw ConfigError("finalize_selection: budget outside [1, n]");

  PruneResult r;
  HardMasks hm = hard_masks(attn);
  r.masks = std::move(hm.masks);
  r.areas = std::move(hm.areas);
  r.elected = std::move(elected);

  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (int idx : r.elected) {
    if (idx < 0 || idx >= n) throw BoundsError("finalize_selection: elected index out of range");
    if (taken[static_cast<std::size_t>(idx)]) {
      ++r.n_duplicates;
    } else {
      taken[static_cast<std::size_t>(idx)] = true;
      r.indices.push_back(idx);
    }
  }
  if (static_cast<Eigen::Index>(r.indices.size()) > budget) {
    throw ConfigError("finalize_selection: more unique picks than the budget");
  }

  if (pad_mode == PadMode::kPad) {
    const Eigen::RowVectorXd col_max = attn.colwise().maxCoeff();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return col_max(a) > col_max(b); });
    for (int idx : order) {
      if (static_cast<Eigen::Index>(r.indices.size()) >= budget) break;
      if (taken[static_cast<std::size_t>(idx)]) continue;
      taken[static_cast<std::size_t>(idx)] = true;
      r.indices.push_back(idx);
      ++r.n_padded;
    }
  }
  std::sort(r.indices.begin(), r.indices.end());
  r.kept = gather(last, r.indices);
  return r;
}

PruneResult prune(const PruneInput& input, const QueryDistribution& dist, const SlotAttentionParams& params,
                  std::uint64_t seed) {
  input.validate();
  const Eigen::Index slots = input.budget / input.top_k;
  const Mat queries = sample_queries(dist, slots, seed);
  const SlotState st = aggregate(params, queries, input.reference);
  std::vector<int> elected =
      input.top_k == 1 ? select_indices(st.attn) : select_indices_topk(st.attn, input.top_k);
  return finalize_selection(st.attn, std::move(elected), input.last, input.budget, input.pad_mode);
}

}  // namespace ocvtp
