// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ocvtp/pruner.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ocvtp {

struct GridShape {
  int height = 0;
  int width = 0;
};

/// "HxW" -> GridShape; ConfigError on malformed text.
GridShape parse_grid(const std::string& text);

/// The override when given (must multiply to n), else the integer square
/// root of n; ConfigError when n is not a perfect square and no override.
GridShape infer_grid(Eigen::Index n, const std::optional<GridShape>& override_shape = std::nullopt);

/// Distinct color for slot i.
std::array<std::uint8_t, 3> slot_color(std::size_t slot);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  std::array<std::uint8_t, 3> at(int x, int y) const;
};

/// Token j sits at grid cell (j / W, j % W). Each cell is filled with the
/// color of its owning slot; kept cells get a white outline.
RgbImage render_prune(const PruneResult& result, GridShape grid, int cell_px = 16);

void write_png(const RgbImage& image, const std::filesystem::path& path);

}  // namespace ocvtp
