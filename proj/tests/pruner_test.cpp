// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/error.hpp"
#include "ocvtp/pruner.hpp"
#include "ocvtp/random.hpp"
#include "ocvtp/slot_attention.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace ocvtp {
namespace {

Mat randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(r, c, rng);
}

// Random column-stochastic attention map, optionally with forced collisions.
Mat random_attention(Eigen::Index s, Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat a(s, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::exp(4.0 * u(rng));
  for (Eigen::Index j = 0; j < n; ++j) a.col(j) /= a.col(j).sum();
  return a;
}

TEST(SelectIndices, SingleRowArgmax) {
  Mat a(1, 3);
  a << 0.1, 0.7, 0.2;
  EXPECT_EQ(select_indices(a), (std::vector<int>{1}));
}

TEST(SelectIndices, Identity) {
  EXPECT_EQ(select_indices(Mat::Identity(3, 3)), (std::vector<int>{0, 1, 2}));
}

TEST(SelectIndices, TieGoesToLowestIndex) {
  Mat a(1, 3);
  a << 0.5, 0.5, 0.0;
  EXPECT_EQ(select_indices(a), (std::vector<int>{0}));
}

TEST(SelectIndices, EmptyThrows) { EXPECT_THROW(select_indices(Mat(0, 0)), ShapeError); }

TEST(SelectIndices, InvariantToMonotoneRowTransforms) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = random_attention(4, 9, rng);
    Mat t = a;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      const double scale = 0.5 + i;
      t.row(i) = (a.row(i).array() * scale).exp() * 3.0 - 1.0;
    }
    EXPECT_EQ(select_indices(a), select_indices(t));
  }
}

TEST(Gather, OrderFollowsIndex) {
  Mat v(3, 2);
  v << 0, 1, 2, 3, 4, 5;
  const std::vector<int> idx = {2, 0};
  Mat expected(2, 2);
  expected << 4, 5, 0, 1;
  EXPECT_EQ(gather(v, idx), expected);
}

TEST(Gather, EmptyAndIdentity) {
  const Mat v = randn(5, 3, 1);
  const Mat empty = gather(v, std::vector<int>{});
  EXPECT_EQ(empty.rows(), 0);
  EXPECT_EQ(empty.cols(), 3);
  std::vector<int> all(5);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(gather(v, all), v);
}

TEST(Gather, OutOfRangeThrows) {
  const Mat v = randn(3, 2, 2);
  EXPECT_THROW(gather(v, std::vector<int>{3}), BoundsError);
  EXPECT_THROW(gather(v, std::vector<int>{-1}), BoundsError);
}

TEST(HardMasks, ColumnArgmax) {
  Mat a(2, 1);
  a << 0.9, 0.1;
  const HardMasks hm = hard_masks(a);
  EXPECT_EQ(hm.masks(0, 0), 1);
  EXPECT_EQ(hm.masks(1, 0), 0);
}

TEST(HardMasks, UniformTiesGoToSlotZero) {
  const HardMasks hm = hard_masks(Mat::Constant(2, 4, 0.5));
  EXPECT_EQ(hm.areas, (std::vector<int>{4, 0}));
}

TEST(HardMasks, MatchesColumnScan) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_attention(4, 20, rng);
    std::vector<int> areas(4, 0);
    for (Eigen::Index j = 0; j < 20; ++j) {
      int best = 0;
      for (int i = 1; i < 4; ++i) {
        if (a(i, j) > a(best, j)) best = i;
      }
      ++areas[static_cast<std::size_t>(best)];
    }
    const HardMasks hm = hard_masks(a);
    EXPECT_EQ(hm.areas, areas);
    EXPECT_EQ(std::accumulate(hm.areas.begin(), hm.areas.end(), 0), 20);
    for (Eigen::Index j = 0; j < 20; ++j) EXPECT_EQ(hm.masks.col(j).cast<int>().sum(), 1);
  }
}

TEST(SelectTopk, KOneEqualsArgmax) {
  Rng rng(5);
  const Mat a = random_attention(5, 12, rng);
  EXPECT_EQ(select_indices_topk(a, 1), select_indices(a));
}

TEST(SelectTopk, OrderedTopTwo) {
  Mat a(1, 3);
  a << 0.5, 0.3, 0.2;
  EXPECT_EQ(select_indices_topk(a, 2), (std::vector<int>{0, 1}));
}

TEST(SelectTopk, MatchesFullSortOracle) {
  Rng rng(6);
  const Mat a = random_attention(3, 10, rng);
  std::vector<int> expected;
  for (Eigen::Index i = 0; i < 3; ++i) {
    std::vector<std::pair<double, int>> row;
    for (int j = 0; j < 10; ++j) row.emplace_back(-a(i, j), j);
    std::sort(row.begin(), row.end());
    for (int k = 0; k < 3; ++k) expected.push_back(row[static_cast<std::size_t>(k)].second);
  }
  EXPECT_EQ(select_indices_topk(a, 3), expected);
}

TEST(SelectTopk, KLargerThanNThrows) {
  EXPECT_THROW(select_indices_topk(Mat::Constant(2, 3, 0.5), 4), ConfigError);
  EXPECT_THROW(select_indices_topk(Mat::Constant(2, 3, 0.5), 0), ConfigError);
}

TEST(Finalize, DedupAndPad) {
  // Both slots elect token 2; pad fills with the highest remaining column max.
  Mat a(2, 4);
  a << 0.2, 0.6, 0.7, 0.5,  //
      0.8, 0.4, 0.3, 0.5;
  const Mat last = randn(4, 3, 7);
  const PruneResult nopad = finalize_selection(a, {2, 2}, last, 2, PadMode::kNoPad);
  EXPECT_EQ(nopad.indices, (std::vector<int>{2}));
  EXPECT_EQ(nopad.n_duplicates, 1);
  EXPECT_EQ(nopad.n_padded, 0);
  const PruneResult pad = finalize_selection(a, {2, 2}, last, 2, PadMode::kPad);
  EXPECT_EQ(pad.indices, (std::vector<int>{0, 2}));
  EXPECT_EQ(pad.n_padded, 1);
  EXPECT_EQ(pad.kept.row(0), last.row(0));
  EXPECT_EQ(pad.kept.row(1), last.row(2));
  EXPECT_EQ(pad.areas, (std::vector<int>{3, 1}));
}

TEST(Finalize, TooManyUniquePicksThrows) {
  const Mat a = Mat::Constant(2, 4, 0.5);
  EXPECT_THROW(finalize_selection(a, {0, 1, 2}, randn(4, 2, 8), 2, PadMode::kPad), ConfigError);
}

// The budget contract over many random attention maps and both pad modes.
TEST(Finalize, BudgetContractProperty) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = std::uniform_int_distribution<int>(1, 40)(rng);
    const Eigen::Index s = std::uniform_int_distribution<int>(1, static_cast<int>(n))(rng);
    Mat a = random_attention(s, n, rng);
    // Force collisions in a third of the trials.
    if (trial % 3 == 0 && n > 1) {
      a.setConstant(0.0);
      for (Eigen::Index j = 0; j < n; ++j) a(0, j) = 1.0;
      a(0, 0) = 1.0;
      a = a.array() + 1e-3;
      for (Eigen::Index j = 0; j < n; ++j) a.col(j) /= a.col(j).sum();
    }
    const PadMode mode = trial % 2 == 0 ? PadMode::kPad : PadMode::kNoPad;
    const PruneResult r = finalize_selection(a, select_indices(a), randn(n, 2, trial), s, mode);
    const std::set<int> unique(r.indices.begin(), r.indices.end());
    EXPECT_EQ(unique.size(), r.indices.size());
    EXPECT_TRUE(std::is_sorted(r.indices.begin(), r.indices.end()));
    if (mode == PadMode::kPad) {
      EXPECT_EQ(static_cast<Eigen::Index>(r.indices.size()), s);
    } else {
      EXPECT_LE(static_cast<Eigen::Index>(r.indices.size()), s);
    }
    EXPECT_EQ(static_cast<Eigen::Index>(r.indices.size()) + r.n_duplicates - r.n_padded, s);
    for (Eigen::Index j = 0; j < n; ++j) EXPECT_EQ(r.masks.col(j).cast<int>().sum(), 1);
    EXPECT_EQ(std::accumulate(r.areas.begin(), r.areas.end(), 0), n);
  }
}

class PruneUntrained : public ::testing::Test {
 protected:
  void SetUp() override {
    dist = QueryDistribution::init(16, 1);
    params = SlotAttentionParams::init(16, 16, 32, 3, 2);
  }
  QueryDistribution dist;
  SlotAttentionParams params;
};

TEST_F(PruneUntrained, PadModeForwardsExactlyBudget) {
  PruneInput in;
  in.reference = randn(576, 16, 3);
  in.last = randn(576, 24, 4);
  in.budget = 64;
  in.pad_mode = PadMode::kPad;
  const PruneResult r = prune(in, dist, params, 5);
  EXPECT_EQ(r.indices.size(), 64u);
  EXPECT_EQ(std::set<int>(r.indices.begin(), r.indices.end()).size(), 64u);
  EXPECT_EQ(r.kept.rows(), 64);
  EXPECT_EQ(r.kept.cols(), 24);
}

TEST_F(PruneUntrained, BudgetEqualsN) {
  PruneInput in;
  in.reference = randn(10, 16, 6);
  in.last = in.reference;
  in.budget = 10;
  in.pad_mode = PadMode::kPad;
  const PruneResult r = prune(in, dist, params, 7);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(r.indices, all);
  EXPECT_EQ(r.kept, in.last);
}

TEST_F(PruneUntrained, ReferenceDrivesSelectionAndLastIsGathered) {
  PruneInput in;
  in.reference = randn(30, 16, 8);
  in.last = randn(30, 5, 9);
  in.budget = 6;
  const PruneResult a = prune(in, dist, params, 11);
  PruneInput other = in;
  other.last = randn(30, 5, 10);
  const PruneResult b = prune(other, dist, params, 11);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(b.kept, gather(other.last, b.indices));
}

TEST_F(PruneUntrained, DeterministicGivenSeed) {
  PruneInput in;
  in.reference = randn(40, 16, 12);
  in.last = in.reference;
  in.budget = 8;
  in.pad_mode = PadMode::kNoPad;
  EXPECT_EQ(prune(in, dist, params, 3), prune(in, dist, params, 3));
}

TEST_F(PruneUntrained, TopkVariantUsesBudgetOverKSlots) {
  PruneInput in;
  in.reference = randn(40, 16, 13);
  in.last = in.reference;
  in.budget = 8;
  in.top_k = 2;
  in.pad_mode = PadMode::kPad;
  const PruneResult r = prune(in, dist, params, 3);
  EXPECT_EQ(r.elected.size(), 8u);
  EXPECT_EQ(r.masks.rows(), 4);
  EXPECT_EQ(r.indices.size(), 8u);
}

TEST_F(PruneUntrained, InvalidInputsThrow) {
  PruneInput in;
  in.reference = randn(10, 16, 14);
  in.last = randn(9, 16, 15);
  in.budget = 3;
  EXPECT_THROW(prune(in, dist, params, 0), ShapeError);
  in.last = in.reference;
  in.budget = 0;
  EXPECT_THROW(prune(in, dist, params, 0), ConfigError);
  in.budget = 11;
  EXPECT_THROW(prune(in, dist, params, 0), ConfigError);
  in.budget = 5;
  in.top_k = 2;
  EXPECT_THROW(prune(in, dist, params, 0), ConfigError);
}

}  // namespace
}  // namespace ocvtp
