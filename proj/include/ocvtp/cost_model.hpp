// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytic prefill FLOPs for a decoder-only transformer, plus the pruner's
// own cost. Per layer and prompt length n:
//   attention projections   4 n d^2
//   attention scores/mixing 2 n^2 d
//   feed-forward            2 n d m
// each multiplied by the MAC factor. Embeddings and the LM head are excluded.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace ocvtp {

/// Slot-attention pruner sizes.
struct SlotArch {
  std::int64_t c = 1024;        // token width of the vision encoder
  std::int64_t d = 1024;        // attention width
  std::int64_t hidden = 1024;   // residual MLP width
  std::int64_t iterations = 3;

  void validate() const;
};

struct ArchSpec {
  std::string name;
  std::int64_t layers = 0;
  std::int64_t hidden = 0;  // model width d
  std::int64_t ffn = 0;     // feed-forward width m
  int mac_factor = 2;
  /// Vision-encoder side sizes used for the pruner overhead.
  SlotArch pruner{};

  void validate() const;
};

struct CostReport {
  double attention_proj = 0.0;
  double attention_quadratic = 0.0;
  double ffn = 0.0;
  double total = 0.0;
  std::int64_t n_vision = 0;
  std::int64_t n_text = 0;
};

CostReport prefill_flops(const ArchSpec& arch, std::int64_t n_vision, std::int64_t n_text);

/// Pruner cost for n reference tokens and s slots, in the same units.
/// Projections and recurrent updates are booked under attention_proj, the
/// s x n attention and the argmax selection under attention_quadratic, and
/// the residual MLP under ffn. s = 0 costs nothing.
CostReport pruner_flops(const SlotArch& slot, std::int64_t n, std::int64_t s, int mac_factor = 2);

/// Built-in architectures: llava-1.5, llava-next, qwen2.5-vl.
std::map<std::string, ArchSpec> builtin_archs();

/// Reads a JSON object keyed by model name, e.g.
/// {"llava-1.5": {"layers": 32, "hidden": 4096, "ffn": 11008, "mac_factor": 2,
///                "pruner": {"c": 1024, "d": 1024, "hidden": 1024, "iterations": 3}}}
std::map<std::string, ArchSpec> load_archs(const std::filesystem::path& path);

/// Looks `name` up in `file` when given, else among the built-ins.
ArchSpec find_arch(const std::string& name, const std::optional<std::filesystem::path>& file = std::nullopt);

/// "6.31 T" / "5.97 G" style rendering with two decimals.
std::string format_flops(double flops);

}  // namespace ocvtp
