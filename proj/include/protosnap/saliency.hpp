#pragma once

#include <vector>

#include "protosnap/features.hpp"
#include "protosnap/image.hpp"

namespace protosnap {

/// Per-target-cell "contains writing" score in [0, 1].
struct SaliencyMap {
  GridGeometry grid;
  std::vector<double> values;  // row-major, grid.rows x grid.cols

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * grid.cols + col]; }
};

struct ClaheConfig {
  int tiles_x = 2;
  int tiles_y = 2;
  /// Multiple of the uniform bin height.
  double clip_limit = 10.0;
  int bins = 256;
};

/// Contrast-limited adaptive histogram equalization of a field with values in
/// [0, 255]: per-tile clipped histograms (excess spread uniformly, one pass),
/// CDF lookup tables, bilinear blending between neighbouring tile tables.
/// Output is in [0, 255].
std::vector<double> clahe(const std::vector<double>& field, int rows, int cols, const ClaheConfig& cfg = {});

/// A prototype grid cell is foreground when the mean intensity of the pixels
/// it covers is below `threshold`.
std::vector<bool> foreground_cells(const GrayImage& proto_image, const GridGeometry& grid, double threshold);

/// Foreground-minus-background mean similarity per target cell, followed by
/// min-max to [0, 255], CLAHE, zeroing below the field mean and min-max to
/// [0, 1]. Throws EmptyForeground when no prototype cell is foreground; an
/// empty background contributes 0.
SaliencyMap compute_saliency(const SimilarityVolume& volume, const GrayImage& proto_image,
                             double fg_threshold = 128.0);

/// Nearest-neighbour upscale to the source image size, values scaled to [0, 255].
GrayImage saliency_to_image(const SaliencyMap& map);

}  // namespace protosnap
