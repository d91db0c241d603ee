#include "protosnap/correspondence.hpp"

#include <cmath>

namespace protosnap {

std::vector<Correspondence> best_buddies(const SimilarityVolume& volume) {
  const GridGeometry& pg = volume.proto_grid();
  const GridGeometry& tg = volume.target_grid();
  const int np = pg.cells();
  const int nt = tg.cells();

  // Forward argmax per prototype cell and backward argmax per target cell in
  // one pass; strict '>' keeps the lowest index on ties.
  std::vector<int> forward(np, 0);
  std::vector<int> backward(nt, 0);
  std::vector<float> backward_best(nt, -INFINITY);
  for (int p = 0; p < np; ++p) {
    const auto slice = volume.target_slice(p);
    float best = -INFINITY;
    for (int t = 0; t < nt; ++t) {
      const float v = slice[t];
      if (v > best) {
        best = v;
        forward[p] = t;
      }
      if (v > backward_best[t]) {
        backward_best[t] = v;
        backward[t] = p;
      }
    }
  }

  std::vector<Correspondence> out;
  for (int p = 0; p < np; ++p) {
    const int t = forward[p];
    if (backward[t] != p) continue;
    const Point ps = grid_to_pixel({static_cast<double>(p / pg.cols), static_cast<double>(p % pg.cols)}, pg);
    const Point ts = grid_to_pixel({static_cast<double>(t / tg.cols), static_cast<double>(t % tg.cols)}, tg);
    out.push_back({ps, ts, volume.target_slice(p)[t]});
  }
  return out;
}

std::vector<Correspondence> filter_foreground(const std::vector<Correspondence>& corrs,
                                              const GrayImage& proto_image,
                                              double intensity_threshold) {
  std::vector<Correspondence> out;
  for (const auto& c : corrs) {
    const int col = static_cast<int>(std::floor(c.proto.x));
    const int row = static_cast<int>(std::floor(c.proto.y));
    if (row < 0 || col < 0 || row >= proto_image.height || col >= proto_image.width) continue;
    if (proto_image.at(row, col) < intensity_threshold) out.push_back(c);
  }
  return out;
}

nlohmann::json correspondences_to_json(const std::vector<Correspondence>& corrs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : corrs) {
    out.push_back({{"proto", {c.proto.x, c.proto.y}}, {"target", {c.target.x, c.target.y}}, {"score", c.score}});
  }
  return out;
}

}  // namespace protosnap
