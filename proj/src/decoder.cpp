// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/decoder.hpp"

#include "ocvtp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ocvtp {

namespace {

constexpr double kMasked = -1e30;

Mat small_normal(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  return scale * standard_normal(rows, cols, rng);
}

/// Additive attention mask over [condition ; stream].
Mat attention_mask(Eigen::Index s, Eigen::Index n) {
  const Eigen::Index total = s + n;
  Mat m = Mat::Constant(total, total, kMasked);
  m.topLeftCorner(s, s).setZero();
  for (Eigen::Index i = s; i < total; ++i) {
    m.block(i, 0, 1, i + 1).setZero();
  }
  return m;
}

}  // namespace

void DecoderConfig::validate() const {
  if (c < 1 || width < 1 || heads < 1 || ffn < 1 || layers < 1 || n_max < 1) {
    throw ConfigError("decoder: all sizes must be positive");
  }
  if (width % heads != 0) throw ConfigError("decoder: width must be divisible by heads");
}

DecoderParams DecoderParams::init(const DecoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0xdec));
  const Eigen::Index c = config.c, w = config.width, f = config.ffn;
  DecoderParams p;
  p.config = config;
  p.cond_w = glorot(c, w, rng);
  p.cond_b = zeros_row(w);
  p.in_w = glorot(c, w, rng);
  p.in_b = zeros_row(w);
  p.pos = small_normal(config.n_max, w, 0.1, rng);
  p.mask_embedding = small_normal(1, w, 0.1, rng);
  for (int l = 0; l < config.layers; ++l) {
    DecoderLayer L;
    L.ln1_gain = ones_row(w);
    L.ln1_bias = zeros_row(w);
    L.wq = glorot(w, w, rng);
    L.wk = glorot(w, w, rng);
    L.wv = glorot(w, w, rng);
    L.wo = glorot(w, w, rng);
    L.ln2_gain = ones_row(w);
    L.ln2_bias = zeros_row(w);
    L.ff_w1 = glorot(w, f, rng);
    L.ff_b1 = zeros_row(f);
    L.ff_w2 = glorot(f, w, rng);
    L.ff_b2 = zeros_row(w);
    p.layers.push_back(std::move(L));
  }
  p.lnf_gain = ones_row(w);
  p.lnf_bias = zeros_row(w);
  p.out_w = glorot(w, c, rng);
  p.out_b = zeros_row(c);
  return p;
}

void DecoderParams::validate() const {
  config.validate();
  if (static_cast<int>(layers.size()) != config.layers) throw ShapeError("decoder: layer count mismatch");
  const Eigen::Index c = config.c, w = config.width, f = config.ffn;
  auto expect = [](const Mat& m, Eigen::Index r, Eigen::Index cc, const std::string& name) {
    if (m.rows() != r || m.cols() != cc) {
      throw ShapeError("decoder: " + name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(r) + "x" + std::to_string(cc));
    }
  };
  expect(cond_w, c, w, "cond_w");
  expect(cond_b, 1, w, "cond_b");
  expect(in_w, c, w, "in_w");
  expect(in_b, 1, w, "in_b");
  expect(pos, config.n_max, w, "pos");
  expect(mask_embedding, 1, w, "mask_embedding");
  for (const auto& L : layers) {
    expect(L.ln1_gain, 1, w, "ln1_gain");
    expect(L.ln1_bias, 1, w, "ln1_bias");
    expect(L.wq, w, w, "wq");
    expect(L.wk, w, w, "wk");
    expect(L.wv, w, w, "wv");
    expect(L.wo, w, w, "wo");
    expect(L.ln2_gain, 1, w, "ln2_gain");
    expect(L.ln2_bias, 1, w, "ln2_bias");
    expect(L.ff_w1, w, f, "ff_w1");
    expect(L.ff_b1, 1, f, "ff_b1");
    expect(L.ff_w2, f, w, "ff_w2");
    expect(L.ff_b2, 1, w, "ff_b2");
  }
  expect(lnf_gain, 1, w, "lnf_gain");
  expect(lnf_bias, 1, w, "lnf_bias");
  expect(out_w, w, c, "out_w");
  expect(out_b, 1, c, "out_b");
}

std::vector<int> random_permutation(Eigen::Index n, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x9e));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

DecoderGraph reconstruct(ag::Tape& tape, const DecoderParams& p, ag::Var condition, const Mat& targets,
                         std::uint64_t perm_seed) {
  using namespace ag;
  const DecoderConfig& cfg = p.config;
  const Eigen::Index n = targets.rows();
  const Eigen::Index s = condition.rows();
  if (n > cfg.n_max) {
    throw CapacityError("decoder: sequence of " + std::to_string(n) + " tokens exceeds n_max=" +
                        std::to_string(cfg.n_max));
  }
  if (n < 1) throw ShapeError("decoder: no targets");
  if (targets.cols() != cfg.c || condition.cols() != cfg.c) {
    throw ShapeError("decoder: condition/targets width must equal " + std::to_string(cfg.c));
  }

  DecoderGraph out;
  out.permutation = random_permutation(n, perm_seed);
  const auto& perm = out.permutation;

  // Teacher forcing: stream row t carries target[perm[t - 1]].
  Mat previous = Mat::Zero(n, cfg.c);
  Mat revealed = Mat::Ones(n, 1);
  Mat first = Mat::Zero(n, 1);
  revealed(0, 0) = 0.0;
  first(0, 0) = 1.0;
  for (Eigen::Index t = 1; t < n; ++t) previous.row(t) = targets.row(perm[static_cast<std::size_t>(t - 1)]);

  Var stream = add(matmul(tape.constant(std::move(previous)), tape.param(p.in_w)),
                   matmul(tape.constant(std::move(revealed)), tape.param(p.in_b)));
  stream = add(stream, matmul(tape.constant(std::move(first)), tape.param(p.mask_embedding)));
  stream = add(stream, gather_rows(tape.param(p.pos), perm));

  Var x = stream;
  if (s > 0) {
    Var cond = add_row(matmul(condition, tape.param(p.cond_w)), tape.param(p.cond_b));
    x = concat_rows(cond, stream);
  }

  Var mask = tape.constant(attention_mask(s, n));
  const Eigen::Index head_width = cfg.width / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_width));
  for (const DecoderLayer& L : p.layers) {
    Var h = layer_norm_rows(x, tape.param(L.ln1_gain), tape.param(L.ln1_bias));
    Var q = matmul(h, tape.param(L.wq));
    Var k = matmul(h, tape.param(L.wk));
    Var v = matmul(h, tape.param(L.wv));
    std::vector<Var> heads;
    for (Eigen::Index hd = 0; hd < cfg.heads; ++hd) {
      const Eigen::Index off = hd * head_width;
      Var scores = add(affine(matmul_bt(slice_cols(q, off, head_width), slice_cols(k, off, head_width)), scale), mask);
      heads.push_back(matmul(softmax_rows(scores), slice_cols(v, off, head_width)));
    }
    x = add(x, matmul(concat_cols(heads), tape.param(L.wo)));

    h = layer_norm_rows(x, tape.param(L.ln2_gain), tape.param(L.ln2_bias));
    h = relu(add_row(matmul(h, tape.param(L.ff_w1)), tape.param(L.ff_b1)));
    x = add(x, add_row(matmul(h, tape.param(L.ff_w2)), tape.param(L.ff_b2)));
  }

  // Row j of the reconstruction is stream step inv_perm[j].
  std::vector<int> rows(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) rows[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] = static_cast<int>(s + t);
  Var y = gather_rows(x, rows);
  y = layer_norm_rows(y, tape.param(p.lnf_gain), tape.param(p.lnf_bias));
  out.prediction = add_row(matmul(y, tape.param(p.out_w)), tape.param(p.out_b));
  if (!out.prediction.value().allFinite()) throw NumericalError("decoder: non-finite reconstruction");
  return out;
}

Reconstruction reconstruct(const DecoderParams& params, const Mat& condition, const Mat& targets,
                           std::uint64_t perm_seed) {
  ag::Tape tape;
  DecoderGraph g = reconstruct(tape, params, tape.constant(condition), targets, perm_seed);
  return {g.prediction.value(), std::move(g.permutation)};
}

LossReport recon_distance(const DecoderParams& params, const Mat& condition, const Mat& targets,
                          std::uint64_t perm_seed, LossKind kind, const MaskMatrix* masks, std::span<const int> areas) {
  if (kind == LossKind::kAwMse && masks == nullptr) throw ConfigError("recon_distance: aw_mse requires masks");
  const Reconstruction r = reconstruct(params, condition, targets, perm_seed);
  if (kind == LossKind::kMse) return mse(r.prediction, targets);
  return aw_mse(r.prediction, targets, *masks, areas);
}

}  // namespace ocvtp
