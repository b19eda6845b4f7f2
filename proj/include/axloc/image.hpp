#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "axloc/tensor.hpp"

namespace axloc {

/// sRGB image with interleaved channels in [0,1], row-major (y, x, channel).
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  [[nodiscard]] double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Loaded PPM/PGM plus whether it was single-channel on disk.
struct LoadedImage {
  RgbImage image;
  bool grayscale = false;
};

/// Binary PPM (P6), 8 bits per channel. Values are clamped to [0,1] and rounded.
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Reads binary P6 or P5 (maxval <= 255). P5 is expanded to three equal channels.
LoadedImage read_pnm(const std::filesystem::path& path);

/// Quantizes to the 8-bit grid used on disk.
RgbImage quantize8(const RgbImage& image);

/// [3,H,W] planar tensor of the image.
Tensor image_to_planar(const RgbImage& image);

}  // namespace axloc
