// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Competitive slot aggregation: queries drawn from a learned Gaussian are
// refined over T iterations of attention normalized across slots, so slots
// compete for every token.

#include "ocvtp/autograd.hpp"
#include "ocvtp/params.hpp"

#include <cstdint>
#include <vector>

namespace ocvtp {

/// Diagonal Gaussian over query vectors. Stored as 1 x c rows.
struct QueryDistribution {
  Mat mu;
  Mat log_sigma;

  static QueryDistribution init(Eigen::Index c, std::uint64_t seed);
  Eigen::Index c() const { return mu.cols(); }

  template <typename F>
  void visit(F&& f) {
    f("query.mu", mu);
    f("query.log_sigma", log_sigma);
  }
  template <typename F>
  void visit(F&& f) const {
    f("query.mu", mu);
    f("query.log_sigma", log_sigma);
  }
};

/// Standard-normal draws used to reparameterize the queries: s x c.
Mat query_noise(Eigen::Index s, Eigen::Index c, std::uint64_t seed);

/// Q = mu + exp(log_sigma) * z with z = query_noise(s, c, seed).
Mat sample_queries(const QueryDistribution& dist, Eigen::Index s, std::uint64_t seed);
ag::Var sample_queries(ag::Tape& tape, const QueryDistribution& dist, const Mat& noise);

struct SlotAttentionParams {
  int iterations = 3;
  Eigen::Index c = 0;       // slot and token width
  Eigen::Index d = 0;       // attention width
  Eigen::Index hidden = 0;  // residual MLP width

  Mat ln_in_gain, ln_in_bias;
  Mat w_key, w_value, w_query;  // c x d
  Mat ln_slot_gain, ln_slot_bias;
  Mat gru_wx, gru_bx;  // d x 3c, 1 x 3c; gate order (reset, update, candidate)
  Mat gru_wh, gru_bh;  // c x 3c, 1 x 3c
  Mat ln_mlp_gain, ln_mlp_bias;
  Mat mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  static SlotAttentionParams init(Eigen::Index c, Eigen::Index d, Eigen::Index hidden, int iterations,
                                  std::uint64_t seed);

  /// Throws ConfigError/ShapeError if the configuration is unusable.
  void validate() const;

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    f("sa.ln_in_gain", p.ln_in_gain);
    f("sa.ln_in_bias", p.ln_in_bias);
    f("sa.w_key", p.w_key);
    f("sa.w_value", p.w_value);
    f("sa.w_query", p.w_query);
    f("sa.ln_slot_gain", p.ln_slot_gain);
    f("sa.ln_slot_bias", p.ln_slot_bias);
    f("sa.gru_wx", p.gru_wx);
    f("sa.gru_bx", p.gru_bx);
    f("sa.gru_wh", p.gru_wh);
    f("sa.gru_bh", p.gru_bh);
    f("sa.ln_mlp_gain", p.ln_mlp_gain);
    f("sa.ln_mlp_bias", p.ln_mlp_bias);
    f("sa.mlp_w1", p.mlp_w1);
    f("sa.mlp_b1", p.mlp_b1);
    f("sa.mlp_w2", p.mlp_w2);
    f("sa.mlp_b2", p.mlp_b2);
  }
};

/// Aggregated slots and the final iteration's attention (softmax over slots).
struct SlotState {
  Mat slots;  // s x c
  Mat attn;   // s x n, every column sums to 1
  /// Attention of every iteration, oldest first; attn == iteration_attn.back().
  std::vector<Mat> iteration_attn;

  Eigen::Index s() const { return slots.rows(); }
  Eigen::Index n() const { return attn.cols(); }
};

struct SlotGraph {
  ag::Var slots;
  ag::Var attn;
  std::vector<Mat> iteration_attn;
};

/// Records the aggregation on a tape so gradients reach params, queries and
/// tokens. Throws NumericalError naming the iteration on non-finite values.
SlotGraph aggregate(ag::Tape& tape, const SlotAttentionParams& params, ag::Var queries, ag::Var tokens);

/// Inference entry point.
SlotState aggregate(const SlotAttentionParams& params, const Mat& queries, const Mat& tokens);

}  // namespace ocvtp
