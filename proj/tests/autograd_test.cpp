// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/autograd.hpp"
#include "ocvtp/error.hpp"
#include "ocvtp/random.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <vector>

namespace ocvtp::ag {
namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output entry contributes a distinct amount.
Var reduce(Tape& t, Var out, std::uint64_t seed) {
  Rng rng(seed);
  const Mat w = standard_normal(out.rows(), out.cols(), rng);
  Vec ones = Vec::Ones(out.rows()) * static_cast<double>(out.cols());
  return weighted_row_sq_error(mul(out, t.constant(w)), Mat::Zero(out.rows(), out.cols()), ones);
}

double max_fd_error(const Builder& build, std::vector<Mat> inputs, double eps = 1e-6) {
  auto eval = [&](const std::vector<Mat>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const Mat& x : xs) vs.push_back(t.leaf(x));
    return reduce(t, build(t, vs), 7).scalar();
  };
  Tape t;
  std::vector<Var> vs;
  for (const Mat& x : inputs) vs.push_back(t.leaf(x));
  Var out = reduce(t, build(t, vs), 7);
  t.backward(out);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat g = t.grad(vs[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      std::vector<Mat> plus = inputs, minus = inputs;
      plus[k](i) += eps;
      minus[k](i) -= eps;
      const double numeric = (eval(plus) - eval(minus)) / (2 * eps);
      const double analytic = g(i);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric) + std::abs(analytic)));
    }
  }
  return worst;
}

Mat randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(r, c, rng);
}

constexpr double kTol = 1e-7;

TEST(Autograd, MatmulAndTransposedMatmul) {
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return matmul(v[0], v[1]); }, {randn(3, 4, 1), randn(4, 2, 2)}),
            kTol);
  EXPECT_LT(
      max_fd_error([](Tape&, const auto& v) { return matmul_bt(v[0], v[1]); }, {randn(3, 4, 3), randn(5, 4, 4)}),
      kTol);
}

TEST(Autograd, ElementwiseArithmetic) {
  const std::vector<Mat> xs = {randn(3, 4, 5), randn(3, 4, 6)};
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return add(v[0], v[1]); }, xs), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return sub(v[0], v[1]); }, xs), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return mul(v[0], v[1]); }, xs), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return affine(v[0], -2.5, 0.3); }, {xs[0]}), kTol);
}

TEST(Autograd, RowBroadcasts) {
  const std::vector<Mat> xs = {randn(4, 3, 7), randn(1, 3, 8)};
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return add_row(v[0], v[1]); }, xs), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return mul_row(v[0], v[1]); }, xs), kTol);
}

TEST(Autograd, Nonlinearities) {
  Mat x = randn(3, 5, 9);
  // Keep relu inputs away from the kink.
  Mat xr = x;
  for (Eigen::Index i = 0; i < xr.size(); ++i) {
    if (std::abs(xr(i)) < 0.05) xr(i) = 0.3;
  }
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return sigmoid(v[0]); }, {x}), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return tanh(v[0]); }, {x}), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return relu(v[0]); }, {xr}), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return exp(v[0]); }, {x}), kTol);
}

TEST(Autograd, Softmaxes) {
  Mat x = randn(4, 6, 10);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return softmax_rows(v[0]); }, {x}), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return softmax_cols(v[0]); }, {x}), kTol);
}

TEST(Autograd, SoftmaxValues) {
  Tape t;
  Mat x = randn(3, 5, 11) * 30.0;
  const Mat c = softmax_cols(t.constant(x)).value();
  const Mat r = softmax_rows(t.constant(x)).value();
  for (Eigen::Index j = 0; j < c.cols(); ++j) EXPECT_NEAR(c.col(j).sum(), 1.0, 1e-12);
  for (Eigen::Index i = 0; i < r.rows(); ++i) EXPECT_NEAR(r.row(i).sum(), 1.0, 1e-12);
  EXPECT_TRUE(c.allFinite());
}

TEST(Autograd, LayerNormAndRowNormalize) {
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return layer_norm_rows(v[0], v[1], v[2]); },
                         {randn(4, 6, 12), randn(1, 6, 13), randn(1, 6, 14)}),
            kTol);
  Mat pos = randn(3, 5, 15).array().abs() + 0.1;
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return row_normalize(v[0], 1e-8); }, {pos}), kTol);
}

TEST(Autograd, LayerNormOutputIsStandardized) {
  Tape t;
  const Mat y = layer_norm_rows(t.constant(randn(5, 16, 16) * 4.0 + Mat::Constant(5, 16, 3.0)),
                                t.constant(Mat::Ones(1, 16)), t.constant(Mat::Zero(1, 16)))
                    .value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(i).array() - y.row(i).mean()).square().mean(), 1.0, 1e-3);
  }
}

TEST(Autograd, Reshaping) {
  const std::vector<int> idx = {2, 0, 2, 3};
  EXPECT_LT(max_fd_error([&](Tape&, const auto& v) { return gather_rows(v[0], idx); }, {randn(4, 3, 17)}), kTol);
  EXPECT_LT(max_fd_error([](Tape&, const auto& v) { return slice_cols(v[0], 1, 2); }, {randn(3, 5, 18)}), kTol);
  EXPECT_LT(max_fd_error(
                [](Tape&, const auto& v) {
                  const Var parts[] = {v[0], v[1]};
                  return concat_cols(parts);
                },
                {randn(3, 2, 19), randn(3, 4, 20)}),
            kTol);
  EXPECT_LT(
      max_fd_error([](Tape&, const auto& v) { return concat_rows(v[0], v[1]); }, {randn(2, 3, 21), randn(4, 3, 22)}),
      kTol);
}

TEST(Autograd, GatherOutOfRangeThrows) {
  Tape t;
  Var a = t.leaf(randn(3, 2, 23));
  const std::vector<int> bad = {0, 3};
  EXPECT_THROW(gather_rows(a, bad), BoundsError);
  const std::vector<int> negative = {-1};
  EXPECT_THROW(gather_rows(a, negative), BoundsError);
}

TEST(Autograd, WeightedRowSquaredError) {
  Tape t;
  Mat pred(2, 2), target(2, 2);
  pred << 1, 2, 3, 4;
  target << 0, 0, 3, 0;
  Vec w(2);
  w << 0.5, 2.0;
  // Row errors: (1 + 4) / 2 = 2.5 and (0 + 16) / 2 = 8.
  Var p = t.leaf(pred);
  Var loss = weighted_row_sq_error(p, target, w);
  EXPECT_DOUBLE_EQ(loss.scalar(), 0.5 * 2.5 + 2.0 * 8.0);
  t.backward(loss);
  Mat expected(2, 2);
  expected << 0.5, 1.0, 0.0, 8.0;
  EXPECT_TRUE(t.grad(p).isApprox(expected, 1e-14));
}

TEST(Autograd, ParamBindingIsStableAndAccumulates) {
  Tape t;
  const Mat w = randn(2, 2, 24);
  Var a = t.param(w);
  Var b = t.param(w);
  EXPECT_EQ(a.id(), b.id());
  Var loss = weighted_row_sq_error(add(a, b), Mat::Zero(2, 2), Vec::Ones(2));
  t.backward(loss);
  // d/dw sum_j mean_c (2w)^2 = 4w.
  EXPECT_TRUE(t.grad_of(&w).isApprox(4.0 * w, 1e-12));
  const Mat other = Mat::Ones(2, 2);
  EXPECT_TRUE(t.grad_of(&other).isZero());
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  Tape t;
  Var c = t.constant(randn(2, 3, 25));
  Var x = t.leaf(randn(2, 3, 26));
  Var loss = weighted_row_sq_error(mul(c, x), Mat::Zero(2, 3), Vec::Ones(2));
  t.backward(loss);
  EXPECT_TRUE(t.grad(c).isZero());
  EXPECT_FALSE(t.grad(x).isZero());
}

TEST(Autograd, BackwardRequiresScalar) {
  Tape t;
  Var x = t.leaf(randn(2, 2, 27));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Autograd, ShapeMismatchThrows) {
  Tape t;
  Var a = t.leaf(randn(2, 3, 28));
  Var b = t.leaf(randn(3, 2, 29));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

}  // namespace
}  // namespace ocvtp::ag
