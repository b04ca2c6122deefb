// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Random auto-regressive transformer decoder.
//
// The sequence fed to the transformer is [condition rows ; n stream rows].
// Stream row t predicts target[perm[t]]; its input is the embedding of the
// previously revealed target (a learned mask embedding at t = 0) plus the
// positional embedding of the position being predicted. Condition rows see
// each other; stream row t sees all condition rows and stream rows <= t.

#include "ocvtp/autograd.hpp"
#include "ocvtp/objective.hpp"
#include "ocvtp/params.hpp"

#include <cstdint>
#include <vector>

namespace ocvtp {

struct DecoderConfig {
  Eigen::Index c = 64;        // token width (and condition width)
  Eigen::Index width = 128;
  Eigen::Index heads = 4;
  Eigen::Index ffn = 256;
  int layers = 2;
  Eigen::Index n_max = 1024;

  void validate() const;
};

struct DecoderLayer {
  Mat ln1_gain, ln1_bias;
  Mat wq, wk, wv, wo;  // width x width
  Mat ln2_gain, ln2_bias;
  Mat ff_w1, ff_b1, ff_w2, ff_b2;
};

struct DecoderParams {
  DecoderConfig config;
  Mat cond_w, cond_b;  // c x width, 1 x width
  Mat in_w, in_b;      // c x width, 1 x width
  Mat pos;             // n_max x width
  Mat mask_embedding;  // 1 x width
  std::vector<DecoderLayer> layers;
  Mat lnf_gain, lnf_bias;
  Mat out_w, out_b;  // width x c, 1 x c

  static DecoderParams init(const DecoderConfig& config, std::uint64_t seed);
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
    f("dec.cond_w", p.cond_w);
    f("dec.cond_b", p.cond_b);
    f("dec.in_w", p.in_w);
    f("dec.in_b", p.in_b);
    f("dec.pos", p.pos);
    f("dec.mask_embedding", p.mask_embedding);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& L = p.layers[l];
      const std::string pre = "dec.layer" + std::to_string(l) + ".";
      f(pre + "ln1_gain", L.ln1_gain);
      f(pre + "ln1_bias", L.ln1_bias);
      f(pre + "wq", L.wq);
      f(pre + "wk", L.wk);
      f(pre + "wv", L.wv);
      f(pre + "wo", L.wo);
      f(pre + "ln2_gain", L.ln2_gain);
      f(pre + "ln2_bias", L.ln2_bias);
      f(pre + "ff_w1", L.ff_w1);
      f(pre + "ff_b1", L.ff_b1);
      f(pre + "ff_w2", L.ff_w2);
      f(pre + "ff_b2", L.ff_b2);
    }
    f("dec.lnf_gain", p.lnf_gain);
    f("dec.lnf_bias", p.lnf_bias);
    f("dec.out_w", p.out_w);
    f("dec.out_b", p.out_b);
  }
};

struct Reconstruction {
  Mat prediction;                // n x c, row j reconstructs target j
  std::vector<int> permutation;  // decoding order: step t predicts permutation[t]
};

struct DecoderGraph {
  ag::Var prediction;
  std::vector<int> permutation;
};

/// Uniform random permutation of [0, n).
std::vector<int> random_permutation(Eigen::Index n, std::uint64_t seed);

/// Teacher-forced reconstruction recorded on a tape (differentiable w.r.t.
/// params and condition). Throws CapacityError when n exceeds n_max.
DecoderGraph reconstruct(ag::Tape& tape, const DecoderParams& params, ag::Var condition, const Mat& targets,
                         std::uint64_t perm_seed);

Reconstruction reconstruct(const DecoderParams& params, const Mat& condition, const Mat& targets,
                           std::uint64_t perm_seed);

/// Reconstruct, then score with the chosen loss. aw_mse needs masks.
LossReport recon_distance(const DecoderParams& params, const Mat& condition, const Mat& targets,
                          std::uint64_t perm_seed, LossKind kind, const MaskMatrix* masks = nullptr,
                          std::span<const int> areas = {});

}  // namespace ocvtp
