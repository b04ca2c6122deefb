// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ocvtp {

/// Token payloads are kept in single precision so that the on-disk f32
/// representation round-trips exactly.
using TokenMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One image's vision tokens (n x c) with optional per-token object labels.
struct TokenSequence {
  TokenMatrix tokens;
  int layer_tag = -1;  // encoder layer the tokens came from, -1 for synthetic
  std::optional<std::vector<std::uint32_t>> labels;
  std::string item_id;

  Eigen::Index n() const { return tokens.rows(); }
  Eigen::Index c() const { return tokens.cols(); }
  Eigen::MatrixXd as_double() const { return tokens.cast<double>(); }

  /// Throws ValidationError naming the item if an invariant is violated.
  void validate() const;

  bool operator==(const TokenSequence& other) const;
};

struct TokenCorpus {
  std::vector<TokenSequence> items;
  std::map<std::string, std::string> meta;

  Eigen::Index c() const { return items.empty() ? 0 : items.front().c(); }
  Eigen::Index min_n() const;
  Eigen::Index max_n() const;
  const TokenSequence* find(const std::string& item_id) const;

  /// Checks every item plus the shared-width and unique-id invariants.
  void validate() const;

  bool operator==(const TokenCorpus& other) const = default;
};

/// Object-structured synthetic generator settings.
struct SynthSpec {
  int n_objects = 8;
  int min_tokens_per_object = 12;
  int max_tokens_per_object = 12;
  int c = 64;
  double center_scale = 1.0;
  double noise_scale = 0.1;
  int n_items = 64;
  std::uint64_t seed = 0;
  // total_tokens > 0 pins n exactly (the last object absorbs the rounding);
  // tiny_object_tokens > 0 gives object 0 exactly that many tokens.
  int total_tokens = 0;
  int tiny_object_tokens = 0;
  // Amplitude of the smooth 2D positional code added to every token. Objects
  // occupy contiguous runs of a boustrophedon path over the item's grid, so
  // position carries information the way it does in encoder features.
  double position_scale = 0.5;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::map<std::string, std::string> to_meta() const;
};

TokenCorpus synth_corpus(const SynthSpec& spec);

/// Grid used to lay out n synthetic tokens: the largest divisor h of n with
/// h <= sqrt(n), and w = n / h.
std::pair<int, int> synth_grid(int n);

/// Sinusoidal code for cell (row, col), length c, unit amplitude.
Eigen::VectorXd positional_code(int row, int col, int c);

/// Writes the OCVT binary plus a sidecar ".json" manifest holding meta.
void save_corpus(const TokenCorpus& corpus, const std::filesystem::path& path);
/// Reads an OCVT file (and its sidecar manifest when present).
TokenCorpus load_corpus(const std::filesystem::path& path);

}  // namespace ocvtp
