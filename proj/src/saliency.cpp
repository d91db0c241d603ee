#include "protosnap/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "protosnap/error.hpp"

namespace protosnap {

namespace {

/// Affine min-max rescale into [0, hi]; a constant field maps to zeros.
void rescale(std::vector<double>& v, double hi) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  for (double& x : v) x = range > 0.0 ? (x - lo) / range * hi : 0.0;
}

}  // namespace

std::vector<double> clahe(const std::vector<double>& field, int rows, int cols, const ClaheConfig& cfg) {
  if (static_cast<int>(field.size()) != rows * cols || rows < cfg.tiles_y || cols < cfg.tiles_x) {
    throw Error(ErrorCode::InvalidArgument, "CLAHE field size");
  }
  const int bins = cfg.bins;
  auto bin_of = [&](double v) {
    return std::clamp(static_cast<int>(std::floor(v / 256.0 * bins)), 0, bins - 1);
  };

  // Tile t covers rows [ty*rows/tiles_y, (ty+1)*rows/tiles_y).
  std::vector<std::vector<double>> luts(static_cast<std::size_t>(cfg.tiles_x) * cfg.tiles_y);
  for (int ty = 0; ty < cfg.tiles_y; ++ty) {
    for (int tx = 0; tx < cfg.tiles_x; ++tx) {
      const int r0 = ty * rows / cfg.tiles_y, r1 = (ty + 1) * rows / cfg.tiles_y;
      const int c0 = tx * cols / cfg.tiles_x, c1 = (tx + 1) * cols / cfg.tiles_x;
      const double pixels = static_cast<double>(r1 - r0) * (c1 - c0);
      std::vector<double> hist(bins, 0.0);
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) hist[bin_of(field[static_cast<std::size_t>(r) * cols + c])] += 1.0;
      }
      const double limit = std::max(1.0, cfg.clip_limit * pixels / bins);
      double excess = 0.0;
      for (double& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      const double share = excess / bins;
      auto& lut = luts[static_cast<std::size_t>(ty) * cfg.tiles_x + tx];
      lut.resize(bins);
      double cdf = 0.0;
      for (int b = 0; b < bins; ++b) {
        cdf += hist[b] + share;
        lut[b] = std::min(255.0, cdf / pixels * 255.0);
      }
    }
  }

  const double tile_h = static_cast<double>(rows) / cfg.tiles_y;
  const double tile_w = static_cast<double>(cols) / cfg.tiles_x;
  std::vector<double> out(field.size());
  for (int r = 0; r < rows; ++r) {
    const double fy = (r + 0.5) / tile_h - 0.5;
    const int ty0 = static_cast<int>(std::floor(fy));
    const double ay = fy - ty0;
    const int ya = std::clamp(ty0, 0, cfg.tiles_y - 1), yb = std::clamp(ty0 + 1, 0, cfg.tiles_y - 1);
    for (int c = 0; c < cols; ++c) {
      const double fx = (c + 0.5) / tile_w - 0.5;
      const int tx0 = static_cast<int>(std::floor(fx));
      const double ax = fx - tx0;
      const int xa = std::clamp(tx0, 0, cfg.tiles_x - 1), xb = std::clamp(tx0 + 1, 0, cfg.tiles_x - 1);
      const int b = bin_of(field[static_cast<std::size_t>(r) * cols + c]);
      auto lut = [&](int ty, int tx) { return luts[static_cast<std::size_t>(ty) * cfg.tiles_x + tx][b]; };
      out[static_cast<std::size_t>(r) * cols + c] =
          (1.0 - ay) * ((1.0 - ax) * lut(ya, xa) + ax * lut(ya, xb)) + ay * ((1.0 - ax) * lut(yb, xa) + ax * lut(yb, xb));
    }
  }
  return out;
}

std::vector<bool> foreground_cells(const GrayImage& proto_image, const GridGeometry& grid, double threshold) {
  std::vector<bool> fg(static_cast<std::size_t>(grid.cells()), false);
  const double sy = static_cast<double>(proto_image.height) / grid.rows;
  const double sx = static_cast<double>(proto_image.width) / grid.cols;
  for (int i = 0; i < grid.rows; ++i) {
    const int r0 = static_cast<int>(std::ceil(i * sy - 0.5));
    const int r1 = std::max(r0 + 1, static_cast<int>(std::ceil((i + 1) * sy - 0.5)));
    for (int j = 0; j < grid.cols; ++j) {
      const int c0 = static_cast<int>(std::ceil(j * sx - 0.5));
      const int c1 = std::max(c0 + 1, static_cast<int>(std::ceil((j + 1) * sx - 0.5)));
      double sum = 0.0;
      int count = 0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          sum += proto_image.clamped(r, c);
          ++count;
        }
      }
      fg[static_cast<std::size_t>(i) * grid.cols + j] = sum / count < threshold;
    }
  }
  return fg;
}

SaliencyMap compute_saliency(const SimilarityVolume& volume, const GrayImage& proto_image, double fg_threshold) {
  const GridGeometry& pg = volume.proto_grid();
  const GridGeometry& tg = volume.target_grid();
  const auto fg = foreground_cells(proto_image, pg, fg_threshold);
  const auto n_fg = std::count(fg.begin(), fg.end(), true);
  const auto n_bg = static_cast<long>(fg.size()) - n_fg;
  if (n_fg == 0) throw Error(ErrorCode::EmptyForeground, "no prototype cell is darker than the threshold");

  const int nt = tg.cells();
  std::vector<double> fg_sum(nt, 0.0), bg_sum(nt, 0.0);
  for (int p = 0; p < pg.cells(); ++p) {
    auto& acc = fg[p] ? fg_sum : bg_sum;
    const auto slice = volume.target_slice(p);
    for (int t = 0; t < nt; ++t) acc[t] += slice[t];
  }
  std::vector<double> field(nt);
  for (int t = 0; t < nt; ++t) {
    field[t] = fg_sum[t] / static_cast<double>(n_fg) - (n_bg > 0 ? bg_sum[t] / static_cast<double>(n_bg) : 0.0);
  }

  rescale(field, 255.0);
  field = clahe(field, tg.rows, tg.cols);
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(field.size());
  for (double& v : field) {
    if (v < mean) v = 0.0;
  }
  rescale(field, 1.0);
  return {tg, std::move(field)};
}

GrayImage saliency_to_image(const SaliencyMap& map) {
  const auto& g = map.grid;
  GrayImage out(g.image_width, g.image_height);
  for (int r = 0; r < out.height; ++r) {
    const int gr = std::min(g.rows - 1, static_cast<int>(r / g.cell_height()));
    for (int c = 0; c < out.width; ++c) {
      const int gc = std::min(g.cols - 1, static_cast<int>(c / g.cell_width()));
      out.at(r, c) = static_cast<float>(255.0 * map.at(gr, gc));
    }
  }
  return out;
}

}  // namespace protosnap
