#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "protosnap/geometry.hpp"

namespace protosnap {

/// Single-channel float image, intensities nominally in [0, 255].
/// Pixel (row r, col c) covers [c, c+1) x [r, r+1); its center is (c+0.5, r+0.5).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  bool empty() const { return width <= 0 || height <= 0; }
  float& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
  /// Clamped-border read.
  float clamped(int row, int col) const;
  /// Bilinear sample at a continuous pixel coordinate, clamping at the border.
  float sample(double x, double y) const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  static RgbImage from_gray(const GrayImage& gray);
  void blend(int row, int col, std::array<std::uint8_t, 3> color, double alpha);
};

/// Separable Gaussian blur with clamped borders; sigma <= 0 returns a copy.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

/// Bilinear resize (pixel-center aligned).
GrayImage resize(const GrayImage& image, int width, int height);

/// Copies [x, x+w) x [y, y+h). Throws InvalidArgument if the box leaves the image.
GrayImage crop(const GrayImage& image, int x, int y, int w, int h);

/// Reads 8/16-bit PNG (any color type, converted to luma) or binary PGM (P5).
GrayImage load_image(const std::filesystem::path& path);
/// Writes 8-bit grayscale PNG, or PGM if the extension is .pgm.
void save_image(const GrayImage& image, const std::filesystem::path& path);
void save_png(const RgbImage& image, const std::filesystem::path& path);

/// Draws an anti-aliasing-free line of the given width.
void draw_line(RgbImage& image, Point a, Point b, double width, std::array<std::uint8_t, 3> color);

}  // namespace protosnap
