// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/viz.hpp"

#include "ocvtp/error.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <regex>

namespace ocvtp {

GridShape parse_grid(const std::string& text) {
  static const std::regex re(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw ConfigError("grid must look like HxW, got '" + text + "'");
  GridShape g{std::stoi(m[1].str()), std::stoi(m[2].str())};
  if (g.height < 1 || g.width < 1) throw ConfigError("grid dimensions must be positive");
  return g;
}

GridShape infer_grid(Eigen::Index n, const std::optional<GridShape>& override_shape) {
  if (override_shape) {
    if (static_cast<Eigen::Index>(override_shape->height) * override_shape->width != n) {
      throw ConfigError("grid " + std::to_string(override_shape->height) + "x" + std::to_string(override_shape->width) +
                        " does not hold " + std::to_string(n) + " tokens");
    }
    return *override_shape;
  }
  const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) throw ConfigError(std::to_string(n) + " tokens is not a square grid; pass --grid HxW");
  return {static_cast<int>(side), static_cast<int>(side)};
}

std::array<std::uint8_t, 3> slot_color(std::size_t slot) {
  // Golden-ratio hue walk, fixed saturation/value.
  const double h = std::fmod(0.11 + 0.6180339887498949 * static_cast<double>(slot), 1.0) * 6.0;
  const double s = 0.65, v = 0.9;
  const int sector = static_cast<int>(h);
  const double f = h - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(x * 255.0)); };
  return {u8(r), u8(g), u8(b)};
}

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
  return {pixels[o], pixels[o + 1], pixels[o + 2]};
}

RgbImage render_prune(const PruneResult& result, GridShape grid, int cell_px) {
  const Eigen::Index n = result.masks.cols();
  if (static_cast<Eigen::Index>(grid.height) * grid.width != n) throw ConfigError("render: grid does not match n");
  if (cell_px < 4) throw ConfigError("render: cells must be at least 4 pixels");

  RgbImage img;
  img.width = grid.width * cell_px;
  img.height = grid.height * cell_px;
  img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3, 0);
  std::vector<bool> kept(static_cast<std::size_t>(n), false);
  for (int idx : result.indices) kept[static_cast<std::size_t>(idx)] = true;

  const int border = std::max(1, cell_px / 8);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index owner = 0;
    while (owner < result.masks.rows() && !result.masks(owner, j)) ++owner;
    const auto color = slot_color(static_cast<std::size_t>(owner));
    const int cy = static_cast<int>(j / grid.width), cx = static_cast<int>(j % grid.width);
    for (int y = 0; y < cell_px; ++y) {
      for (int x = 0; x < cell_px; ++x) {
        const bool edge = x < border || y < border || x >= cell_px - border || y >= cell_px - border;
        const std::size_t o =
            ((static_cast<std::size_t>(cy * cell_px + y)) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(cx * cell_px + x)) * 3;
        for (int ch = 0; ch < 3; ++ch) {
          img.pixels[o + ch] = (kept[static_cast<std::size_t>(j)] && edge) ? 255 : color[ch];
        }
      }
    }
  }
  return img;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw StorageError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw StorageError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw StorageError("PNG encoding failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width) * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace ocvtp
