#include "protosnap/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <png.h>

#include "protosnap/error.hpp"

namespace protosnap {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

float GrayImage::clamped(int row, int col) const {
  row = std::clamp(row, 0, height - 1);
  col = std::clamp(col, 0, width - 1);
  return at(row, col);
}

float GrayImage::sample(double x, double y) const {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1.0 - ax) * clamped(y0, x0) + ax * clamped(y0, x0 + 1);
  const double bottom = (1.0 - ax) * clamped(y0 + 1, x0) + ax * clamped(y0 + 1, x0 + 1);
  return static_cast<float>((1.0 - ay) * top + ay * bottom);
}

RgbImage RgbImage::from_gray(const GrayImage& gray) {
  RgbImage out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(gray.data[i]), 0L, 255L));
    out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = v;
  }
  return out;
}

void RgbImage::blend(int row, int col, std::array<std::uint8_t, 3> color, double alpha) {
  if (row < 0 || col < 0 || row >= height || col >= width) return;
  auto* px = &data[(static_cast<std::size_t>(row) * width + col) * 3];
  for (int c = 0; c < 3; ++c) {
    px[c] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * px[c] + alpha * color[c]));
  }
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  if (sigma <= 0.0 || image.empty()) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  GrayImage tmp(image.width, image.height);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.clamped(r, c + i);
      tmp.at(r, c) = static_cast<float>(acc);
    }
  }
  GrayImage out(image.width, image.height);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.clamped(r + i, c);
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

GrayImage resize(const GrayImage& image, int width, int height) {
  if (width <= 0 || height <= 0 || image.empty()) {
    throw Error(ErrorCode::InvalidArgument, "resize to or from an empty image");
  }
  GrayImage out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) out.at(r, c) = image.sample((c + 0.5) * sx, (r + 0.5) * sy);
  }
  return out;
}

GrayImage crop(const GrayImage& image, int x, int y, int w, int h) {
  if (w <= 0 || h <= 0 || x < 0 || y < 0 || x + w > image.width || y + h > image.height) {
    throw Error(ErrorCode::InvalidArgument, "crop box outside image");
  }
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(r, c) = image.at(y + r, x + c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::Parse, "unsupported PGM " + path.string());
  }
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::Parse, "truncated PGM " + path.string());
  GrayImage out(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] * (255.0f / maxval);
  return out;
}

GrayImage load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Io, "libpng init failed");
  }
  GrayImage out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Parse, "invalid PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (int r = 0; r < h; ++r) rows[r] = buffer.data() + stride * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out = GrayImage(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(r, c) = buffer[stride * r + c];
  }
  return out;
}

void write_png(const std::filesystem::path& path, int w, int h, int color_type, int channels,
               const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "PNG write failed " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < h; ++r) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(r) * w * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "missing image " + path.string());
  std::ifstream in(path, std::ios::binary);
  char head[2] = {};
  in.read(head, 2);
  if (head[0] == 'P' && head[1] == '5') return load_pgm(path);
  return load_png(path);
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::clamp(std::lround(image.data[i]), 0L, 255L));
  }
  if (path.extension() == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return;
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1, bytes);
}

void save_png(const RgbImage& image, const std::filesystem::path& path) {
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.data);
}

void draw_line(RgbImage& image, Point a, Point b, double width, std::array<std::uint8_t, 3> color) {
  const double half = std::max(0.5, width / 2.0);
  const int x0 = static_cast<int>(std::floor(std::min(a.x, b.x) - half));
  const int x1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + half));
  const int y0 = static_cast<int>(std::floor(std::min(a.y, b.y) - half));
  const int y1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + half));
  const Point d = b - a;
  const double len2 = d.x * d.x + d.y * d.y;
  for (int r = std::max(0, y0); r <= std::min(image.height - 1, y1); ++r) {
    for (int c = std::max(0, x0); c <= std::min(image.width - 1, x1); ++c) {
      const Point p{c + 0.5, r + 0.5};
      double t = len2 > 0.0 ? ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      if (distance(p, a + t * d) <= half) image.blend(r, c, color, 1.0);
    }
  }
}

}  // namespace protosnap
