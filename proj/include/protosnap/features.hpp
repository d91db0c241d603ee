#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "protosnap/geometry.hpp"
#include "protosnap/image.hpp"

namespace protosnap {

/// Size of a feature grid and of the image it was computed from.
struct GridGeometry {
  int rows = 0;
  int cols = 0;
  int image_height = 0;
  int image_width = 0;

  int cells() const { return rows * cols; }
  double cell_height() const { return static_cast<double>(image_height) / rows; }
  double cell_width() const { return static_cast<double>(image_width) / cols; }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Fractional grid coordinate; integer values are cell centers.
struct GridCoord {
  double row = 0.0;
  double col = 0.0;
};

/// Cell-center convention: pixel = (index + 0.5) * (image_size / grid_size).
Point grid_to_pixel(GridCoord coord, const GridGeometry& grid);
GridCoord pixel_to_grid(Point p, const GridGeometry& grid);

/// Dense unit-norm descriptors on a rows x cols grid.
///
/// Stored position-major (all channels of a cell are contiguous); the file
/// format is channel-major and is converted on load/save.
class FeatureMap {
 public:
  static constexpr double kNormTolerance = 1e-3;

  FeatureMap() = default;
  /// `position_major` holds rows*cols vectors of `channels` floats. Throws
  /// DimMismatch on a size mismatch and NotNormalized if any vector norm is
  /// outside 1 ± 1e-3.
  FeatureMap(int channels, GridGeometry grid, std::vector<float> position_major);

  int channels() const { return channels_; }
  int rows() const { return grid_.rows; }
  int cols() const { return grid_.cols; }
  const GridGeometry& grid() const { return grid_; }
  std::span<const float> vec(int row, int col) const;
  std::span<const float> data() const { return data_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int channels_ = 0;
  GridGeometry grid_;
  std::vector<float> data_;
};

/// Reads an FMAP0001 file. Errors: Io, BadMagic, DimMismatch, NotNormalized.
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& map, const std::filesystem::path& path);

/// Built-in handcrafted descriptor. Per cell and per scale: a mean-subtracted
/// 9x9 intensity patch spanning `scale` cells, an 8-bin gradient orientation
/// histogram and the patch mean level. Blocks are scaled by their weight,
/// concatenated and L2-normalized.
///
/// The wide scales see most of a 512 px sign and tell repeated parallel
/// wedges apart; the narrow ones, kept light, sharpen the local peak.
struct BuiltinFeatureOptions {
  std::vector<double> scales = {1.0, 2.0, 4.0, 16.0, 32.0, 64.0};
  std::vector<double> weights = {0.1, 0.1, 0.1, 1.0, 1.0, 1.0};
};

FeatureMap extract_builtin_features(const GrayImage& image, int grid_rows = 64, int grid_cols = 64,
                                    const BuiltinFeatureOptions& opts = {});
int builtin_channels(const BuiltinFeatureOptions& opts = {});

/// S[i][j][k][l] = <proto(i,j), target(k,l)>, stored dense as a
/// (proto cells) x (target cells) row-major matrix.
class SimilarityVolume {
 public:
  SimilarityVolume(GridGeometry proto, GridGeometry target, std::vector<float> values);

  const GridGeometry& proto_grid() const { return proto_; }
  const GridGeometry& target_grid() const { return target_; }
  float at(int i, int j, int k, int l) const {
    return values_[static_cast<std::size_t>(i * proto_.cols + j) * target_.cells() + k * target_.cols + l];
  }
  /// All target similarities of prototype cell `proto_index` (row-major cell index).
  std::span<const float> target_slice(int proto_index) const;
  std::span<const float> values() const { return values_; }

 private:
  GridGeometry proto_;
  GridGeometry target_;
  std::vector<float> values_;
};

/// Throws ChannelMismatch if channel counts differ and DimMismatch if the
/// grids differ in size.
SimilarityVolume similarity_volume(const FeatureMap& proto, const FeatureMap& target);

}  // namespace protosnap
