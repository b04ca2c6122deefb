// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/slot_attention.hpp"

#include "ocvtp/error.hpp"

#include <cmath>
#include <string>

namespace ocvtp {

namespace {
constexpr double kReadoutEps = 1e-8;
}

QueryDistribution QueryDistribution::init(Eigen::Index c, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x51));
  QueryDistribution q;
  q.mu = glorot(1, c, rng);
  q.log_sigma = glorot(1, c, rng);
  return q;
}

Mat query_noise(Eigen::Index s, Eigen::Index c, std::uint64_t seed) {
  if (s < 0) throw ConfigError("sample_queries: slot count must be >= 0");
  Rng rng(mix_seed(seed, 0x9));
  return standard_normal(s, c, rng);
}

Mat sample_queries(const QueryDistribution& dist, Eigen::Index s, std::uint64_t seed) {
  const Mat z = query_noise(s, dist.c(), seed);
  const Eigen::RowVectorXd sigma = dist.log_sigma.row(0).array().exp();
  Mat q = z.array().rowwise() * sigma.array();
  q.rowwise() += dist.mu.row(0);
  return q;
}

ag::Var sample_queries(ag::Tape& tape, const QueryDistribution& dist, const Mat& noise) {
  if (noise.cols() != dist.c()) throw ShapeError("sample_queries: noise width differs from distribution");
  ag::Var sigma = ag::exp(tape.param(dist.log_sigma));
  return ag::add_row(ag::mul_row(tape.constant(noise), sigma), tape.param(dist.mu));
}

SlotAttentionParams SlotAttentionParams::init(Eigen::Index c, Eigen::Index d, Eigen::Index hidden, int iterations,
                                              std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5a));
  SlotAttentionParams p;
  p.iterations = iterations;
  p.c = c;
  p.d = d;
  p.hidden = hidden;
  p.ln_in_gain = ones_row(c);
  p.ln_in_bias = zeros_row(c);
  p.w_key = glorot(c, d, rng);
  p.w_value = glorot(c, d, rng);
  p.w_query = glorot(c, d, rng);
  p.ln_slot_gain = ones_row(c);
  p.ln_slot_bias = zeros_row(c);
  p.gru_wx = glorot(d, 3 * c, rng);
  p.gru_bx = zeros_row(3 * c);
  p.gru_wh = glorot(c, 3 * c, rng);
  p.gru_bh = zeros_row(3 * c);
  p.ln_mlp_gain = ones_row(c);
  p.ln_mlp_bias = zeros_row(c);
  p.mlp_w1 = glorot(c, hidden, rng);
  p.mlp_b1 = zeros_row(hidden);
  p.mlp_w2 = glorot(hidden, c, rng);
  p.mlp_b2 = zeros_row(c);
  p.validate();
  return p;
}

void SlotAttentionParams::validate() const {
  if (iterations < 1) throw ConfigError("slot attention: iterations must be >= 1");
  if (c < 1 || d < 1 || hidden < 1) throw ConfigError("slot attention: widths must be positive");
  auto expect = [](const Mat& m, Eigen::Index r, Eigen::Index cc, const char* name) {
    if (m.rows() != r || m.cols() != cc) {
      throw ShapeError(std::string("slot attention: ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(cc));
    }
    if (!m.allFinite()) throw ValidationError(std::string("slot attention: ") + name + " is not finite");
  };
  expect(ln_in_gain, 1, c, "ln_in_gain");
  expect(ln_in_bias, 1, c, "ln_in_bias");
  expect(w_key, c, d, "w_key");
  expect(w_value, c, d, "w_value");
  expect(w_query, c, d, "w_query");
  expect(ln_slot_gain, 1, c, "ln_slot_gain");
  expect(ln_slot_bias, 1, c, "ln_slot_bias");
  expect(gru_wx, d, 3 * c, "gru_wx");
  expect(gru_bx, 1, 3 * c, "gru_bx");
  expect(gru_wh, c, 3 * c, "gru_wh");
  expect(gru_bh, 1, 3 * c, "gru_bh");
  expect(ln_mlp_gain, 1, c, "ln_mlp_gain");
  expect(ln_mlp_bias, 1, c, "ln_mlp_bias");
  expect(mlp_w1, c, hidden, "mlp_w1");
  expect(mlp_b1, 1, hidden, "mlp_b1");
  expect(mlp_w2, hidden, c, "mlp_w2");
  expect(mlp_b2, 1, c, "mlp_b2");
}

SlotGraph aggregate(ag::Tape& tape, const SlotAttentionParams& p, ag::Var queries, ag::Var tokens) {
  using namespace ag;
  if (queries.cols() != p.c || tokens.cols() != p.c) {
    throw ShapeError("aggregate: queries/tokens width must equal " + std::to_string(p.c));
  }
  if (tokens.rows() < 1) throw ShapeError("aggregate: no tokens");
  if (queries.rows() < 1) throw ShapeError("aggregate: no slots");
  const Eigen::Index c = p.c;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(p.d));

  Var inputs = layer_norm_rows(tokens, tape.param(p.ln_in_gain), tape.param(p.ln_in_bias));
  Var keys = matmul(inputs, tape.param(p.w_key));
  Var values = matmul(inputs, tape.param(p.w_value));

  SlotGraph out;
  Var slots = queries;
  for (int it = 0; it < p.iterations; ++it) {
    Var prev = slots;
    Var q = matmul(layer_norm_rows(slots, tape.param(p.ln_slot_gain), tape.param(p.ln_slot_bias)),
                   tape.param(p.w_query));
    Var attn = softmax_cols(affine(matmul_bt(q, keys), temperature));
    Var updates = matmul(row_normalize(attn, kReadoutEps), values);

    Var gx = add_row(matmul(updates, tape.param(p.gru_wx)), tape.param(p.gru_bx));
    Var gh = add_row(matmul(prev, tape.param(p.gru_wh)), tape.param(p.gru_bh));
    Var reset = sigmoid(add(slice_cols(gx, 0, c), slice_cols(gh, 0, c)));
    Var update = sigmoid(add(slice_cols(gx, c, c), slice_cols(gh, c, c)));
    Var cand = ag::tanh(add(slice_cols(gx, 2 * c, c), mul(reset, slice_cols(gh, 2 * c, c))));
    slots = add(cand, mul(update, sub(prev, cand)));

    Var h = layer_norm_rows(slots, tape.param(p.ln_mlp_gain), tape.param(p.ln_mlp_bias));
    h = relu(add_row(matmul(h, tape.param(p.mlp_w1)), tape.param(p.mlp_b1)));
    slots = add(slots, add_row(matmul(h, tape.param(p.mlp_w2)), tape.param(p.mlp_b2)));

    if (!attn.value().allFinite() || !slots.value().allFinite()) {
      throw NumericalError("slot attention: non-finite value at iteration " + std::to_string(it));
    }
    out.iteration_attn.push_back(attn.value());
    out.attn = attn;
  }
  out.slots = slots;
  return out;
}

SlotState aggregate(const SlotAttentionParams& params, const Mat& queries, const Mat& tokens) {
  ag::Tape tape;
  SlotGraph g = aggregate(tape, params, tape.constant(queries), tape.constant(tokens));
  SlotState st;
  st.slots = g.slots.value();
  st.attn = g.attn.value();
  st.iteration_attn = std::move(g.iteration_attn);
  return st;
}

}  // namespace ocvtp
