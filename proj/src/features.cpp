#include "protosnap/features.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include <Eigen/Core>

#include "protosnap/error.hpp"

namespace protosnap {

Point grid_to_pixel(GridCoord coord, const GridGeometry& grid) {
  return {(coord.col + 0.5) * grid.cell_width(), (coord.row + 0.5) * grid.cell_height()};
}

GridCoord pixel_to_grid(Point p, const GridGeometry& grid) {
  return {p.y / grid.cell_height() - 0.5, p.x / grid.cell_width() - 0.5};
}

// ---------------------------------------------------------------------------
// FeatureMap

FeatureMap::FeatureMap(int channels, GridGeometry grid, std::vector<float> position_major)
    : channels_(channels), grid_(grid), data_(std::move(position_major)) {
  if (channels_ < 1 || grid_.rows < 1 || grid_.cols < 1) {
    throw Error(ErrorCode::DimMismatch, "feature map dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(channels_) * grid_.cells()) {
    throw Error(ErrorCode::DimMismatch, "payload size does not match declared dimensions");
  }
  for (int r = 0; r < grid_.rows; ++r) {
    for (int c = 0; c < grid_.cols; ++c) {
      double sq = 0.0;
      for (float v : vec(r, c)) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq);
      if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
        throw Error(ErrorCode::NotNormalized, "vector at (" + std::to_string(r) + ", " +
                                                  std::to_string(c) + ") has norm " + std::to_string(norm));
      }
    }
  }
}

std::span<const float> FeatureMap::vec(int row, int col) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(row * grid_.cols + col) * channels_,
                                               channels_);
}

namespace {

constexpr char kMagic[8] = {'F', 'M', 'A', 'P', '0', '0', '0', '1'};

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(const unsigned char* p) { return std::bit_cast<float>(read_u32_le(p)); }

}  // namespace

FeatureMap load_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open feature map " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::BadMagic, path.string());
  }
  constexpr std::size_t kHeader = sizeof(kMagic) + 5 * 4;
  if (bytes.size() < kHeader) throw Error(ErrorCode::DimMismatch, "truncated header in " + path.string());
  const unsigned char* h = bytes.data() + sizeof(kMagic);
  const std::uint64_t c = read_u32_le(h), rows = read_u32_le(h + 4), cols = read_u32_le(h + 8);
  const std::uint32_t src_h = read_u32_le(h + 12), src_w = read_u32_le(h + 16);
  const std::uint64_t count = c * rows * cols;
  if (c == 0 || rows == 0 || cols == 0 || bytes.size() - kHeader != count * 4) {
    throw Error(ErrorCode::DimMismatch, "payload of " + path.string() + " does not match C*H*W");
  }
  const GridGeometry grid{static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(src_h),
                          static_cast<int>(src_w)};
  const unsigned char* payload = bytes.data() + kHeader;
  const std::size_t cells = rows * cols;
  std::vector<float> data(count);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t pos = 0; pos < cells; ++pos) {
      data[pos * c + ch] = read_f32_le(payload + (ch * cells + pos) * 4);
    }
  }
  return FeatureMap(static_cast<int>(c), grid, std::move(data));
}

void save_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto& g = map.grid();
  for (int v : {map.channels(), g.rows, g.cols, g.image_height, g.image_width}) {
    write_u32_le(out, static_cast<std::uint32_t>(v));
  }
  const auto data = map.data();
  const std::size_t cells = static_cast<std::size_t>(g.cells());
  for (std::size_t ch = 0; ch < static_cast<std::size_t>(map.channels()); ++ch) {
    for (std::size_t pos = 0; pos < cells; ++pos) {
      write_u32_le(out, std::bit_cast<std::uint32_t>(data[pos * map.channels() + ch]));
    }
  }
}

// ---------------------------------------------------------------------------
// Built-in extractor

namespace {

constexpr int kPatch = 9;
constexpr int kBins = 8;
constexpr int kPerScale = kPatch * kPatch + kBins + 1;
constexpr double kLevelWeight = 1.0;

void add_orientation(std::array<double, kBins>& hist, double angle, double mag) {
  if (!(mag > 0.0)) return;
  const double turn = 2.0 * std::numbers::pi;
  angle = std::fmod(angle, turn);
  if (angle < 0.0) angle += turn;
  const double pos = angle / turn * kBins;
  const int b0 = static_cast<int>(std::floor(pos)) % kBins;
  const double frac = pos - std::floor(pos);
  hist[b0] += (1.0 - frac) * mag;
  hist[(b0 + 1) % kBins] += frac * mag;
}

/// Patch, orientation histogram and mean level of one scale, written to `out`.
void scale_block(const GrayImage& img, Point center, double span_x, double span_y, double* out) {
  const double step_x = span_x / kPatch, step_y = span_y / kPatch;
  std::array<double, kPatch * kPatch> patch{};
  std::array<double, kBins> hist{};
  double mean = 0.0;
  for (int py = 0; py < kPatch; ++py) {
    for (int px = 0; px < kPatch; ++px) {
      const double x = center.x + ((px + 0.5) / kPatch - 0.5) * span_x;
      const double y = center.y + ((py + 0.5) / kPatch - 0.5) * span_y;
      const double v = img.sample(x, y) / 255.0;
      patch[py * kPatch + px] = v;
      mean += v;
      // Intensity change across one sample step.
      const double gx = (img.sample(x + step_x, y) - img.sample(x - step_x, y)) / (2.0 * 255.0);
      const double gy = (img.sample(x, y + step_y) - img.sample(x, y - step_y)) / (2.0 * 255.0);
      add_orientation(hist, std::atan2(gy, gx), std::hypot(gx, gy));
    }
  }
  mean /= kPatch * kPatch;
  for (double v : patch) *out++ = v - mean;
  for (double h : hist) *out++ = h / kPatch;
  *out = kLevelWeight * mean;
}

}  // namespace

int builtin_channels(const BuiltinFeatureOptions& opts) {
  return kPerScale * static_cast<int>(opts.scales.size());
}

FeatureMap extract_builtin_features(const GrayImage& image, int grid_rows, int grid_cols,
                                    const BuiltinFeatureOptions& opts) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");
  if (grid_rows < 1 || grid_cols < 1) throw Error(ErrorCode::InvalidArgument, "empty grid");
  if (opts.scales.empty()) throw Error(ErrorCode::InvalidArgument, "no descriptor scales");
  if (opts.weights.size() != opts.scales.size()) {
    throw Error(ErrorCode::InvalidArgument, "one weight per descriptor scale required");
  }
  const int channels = builtin_channels(opts);
  const GridGeometry grid{grid_rows, grid_cols, image.height, image.width};
  const double cell = std::min(grid.cell_width(), grid.cell_height());

  // One pre-smoothed copy per scale so the 9x9 resampling does not alias.
  std::vector<GrayImage> smoothed;
  for (double s : opts.scales) smoothed.push_back(gaussian_blur(image, 0.5 * s * cell / kPatch));

  std::vector<float> data(static_cast<std::size_t>(channels) * grid.cells());
  std::vector<double> desc(channels);
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      const Point center = grid_to_pixel({static_cast<double>(r), static_cast<double>(c)}, grid);
      std::size_t o = 0;
      for (std::size_t si = 0; si < opts.scales.size(); ++si) {
        const double span_x = opts.scales[si] * grid.cell_width();
        const double span_y = opts.scales[si] * grid.cell_height();
        scale_block(smoothed[si], center, span_x, span_y, desc.data() + o);
        for (int q = 0; q < kPerScale; ++q) desc[o + q] *= opts.weights[si];
        o += kPerScale;
      }
      double sq = 0.0;
      for (double v : desc) sq += v * v;
      const double inv = 1.0 / std::max(std::sqrt(sq), 1e-8);
      float* dst = data.data() + static_cast<std::size_t>(r * grid_cols + c) * channels;
      for (std::size_t k = 0; k < desc.size(); ++k) dst[k] = static_cast<float>(desc[k] * inv);
    }
  }
  return FeatureMap(channels, grid, std::move(data));
}

// ---------------------------------------------------------------------------
// SimilarityVolume

SimilarityVolume::SimilarityVolume(GridGeometry proto, GridGeometry target, std::vector<float> values)
    : proto_(proto), target_(target), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(proto_.cells()) * target_.cells()) {
    throw Error(ErrorCode::DimMismatch, "similarity volume size mismatch");
  }
}

std::span<const float> SimilarityVolume::target_slice(int proto_index) const {
  const auto n = static_cast<std::size_t>(target_.cells());
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(proto_index) * n, n);
}

SimilarityVolume similarity_volume(const FeatureMap& proto, const FeatureMap& target) {
  if (proto.channels() != target.channels()) {
    throw Error(ErrorCode::ChannelMismatch, std::to_string(proto.channels()) + " vs " +
                                                std::to_string(target.channels()) + " channels");
  }
  if (proto.rows() != target.rows() || proto.cols() != target.cols()) {
    throw Error(ErrorCode::DimMismatch, "prototype and target grids differ");
  }
  using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int c = proto.channels();
  const int np = proto.grid().cells();
  const int nt = target.grid().cells();
  // Position-major storage is a column-major C x cells matrix. Products run in
  // double so a unit vector dotted with itself stays within 1e-6 of one.
  const ColMat fp = Eigen::Map<const Eigen::MatrixXf>(proto.data().data(), c, np).cast<double>();
  const ColMat ft = Eigen::Map<const Eigen::MatrixXf>(target.data().data(), c, nt).cast<double>();
  std::vector<float> values(static_cast<std::size_t>(np) * nt);
  Eigen::Map<RowMat> s(values.data(), np, nt);
  constexpr int kBlock = 256;
  for (int r0 = 0; r0 < np; r0 += kBlock) {
    const int n = std::min(kBlock, np - r0);
    s.middleRows(r0, n) = (fp.middleCols(r0, n).transpose() * ft).cast<float>();
  }
  return SimilarityVolume(proto.grid(), target.grid(), std::move(values));
}

}  // namespace protosnap
