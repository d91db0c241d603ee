#include "protosnap/refine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "protosnap/adam.hpp"
#include "protosnap/error.hpp"

namespace protosnap {

void RefineConfig::validate() const {
  // Zero loss weights are allowed so single terms can be ablated.
  const bool ok = lambda_sim >= 0 && lambda_sal >= 0 && lambda_reg >= 0 && iterations >= 1 && learning_rate > 0 &&
                  softmax_temperature > 0 && points_per_segment >= 0 && adam_beta1 > 0 && adam_beta2 > 0 &&
                  adam_eps > 0;
  if (!ok) throw Error(ErrorCode::InvalidArgument, "refine config: weights must be non-negative, rates and counts positive");
}

std::vector<SkeletonSample> sample_skeleton_points(const Skeleton& skeleton, int points_per_segment,
                                                   std::mt19937_64& rng) {
  std::vector<SkeletonSample> out;
  out.reserve(skeleton.strokes.size() * kKeypointsPerStroke + skeleton.edges.size() * points_per_segment);
  for (int i = 0; i < static_cast<int>(skeleton.strokes.size()); ++i) {
    for (int k = 0; k < kKeypointsPerStroke; ++k) out.push_back({i, skeleton.strokes[i].keypoint(k), true});
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& e : skeleton.edges) {
    const Point a = skeleton.edge_start(e);
    const Point b = skeleton.edge_end(e);
    for (int s = 0; s < points_per_segment; ++s) {
      double t = unit(rng);
      while (t <= 0.0) t = unit(rng);
      out.push_back({e.stroke_a, a + t * (b - a), false});
    }
  }
  return out;
}

namespace {

template <typename T>
std::vector<double> softmax_impl(std::span<const T> field, double temperature) {
  std::vector<double> out(field.size());
  if (field.empty()) return out;
  const double hi = *std::max_element(field.begin(), field.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    out[i] = std::exp(temperature * (static_cast<double>(field[i]) - hi));
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// Zero-padded bilinear sample of a row-major field at fractional (row, col),
/// with partial derivatives.
struct Bilinear {
  double value = 0.0;
  double d_row = 0.0;
  double d_col = 0.0;
};

Bilinear bilinear(const std::vector<double>& field, int rows, int cols, double row, double col) {
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const double ar = row - r0;
  const double ac = col - c0;
  auto at = [&](int r, int c) {
    return (r < 0 || c < 0 || r >= rows || c >= cols) ? 0.0 : field[static_cast<std::size_t>(r) * cols + c];
  };
  const double f00 = at(r0, c0), f01 = at(r0, c0 + 1), f10 = at(r0 + 1, c0), f11 = at(r0 + 1, c0 + 1);
  Bilinear b;
  b.value = (1 - ar) * ((1 - ac) * f00 + ac * f01) + ar * ((1 - ac) * f10 + ac * f11);
  b.d_col = (1 - ar) * (f01 - f00) + ar * (f11 - f10);
  b.d_row = (1 - ac) * (f10 - f00) + ac * (f11 - f01);
  return b;
}

detail::Projected project(const StrokeTransform& local, double nx, double ny) {
  const auto& p = local.p;
  const double wx = (1.0 + p[0]) * nx + p[1] * ny + p[2];
  const double wy = p[3] * nx + (1.0 + p[4]) * ny + p[5];
  const double wz = p[6] * nx + p[7] * ny + 1.0;
  if (std::abs(wz) < 1e-9) throw Error(ErrorCode::DegenerateProjection, "homogeneous coordinate vanished");
  detail::Projected out;
  const double iz = 1.0 / wz;
  out.x = wx * iz;
  out.y = wy * iz;
  out.dx = {nx * iz, ny * iz, iz, 0.0, 0.0, 0.0, -out.x * nx * iz, -out.x * ny * iz};
  out.dy = {0.0, 0.0, 0.0, nx * iz, ny * iz, iz, -out.y * nx * iz, -out.y * ny * iz};
  return out;
}

Mat3 normalizer(int width, int height, Point c) {
  return {2.0 / width, 0.0, -2.0 * c.x / width, 0.0, 2.0 / height, -2.0 * c.y / height, 0.0, 0.0, 1.0};
}

Mat3 denormalizer(int width, int height, Point c) {
  return {width / 2.0, 0.0, c.x, 0.0, height / 2.0, c.y, 0.0, 0.0, 1.0};
}

StrokeTransform from_matrix(const Mat3& m) {
  if (std::abs(m[8]) < 1e-12) {
    throw Error(ErrorCode::DegenerateProjection, "transform cannot be scaled to a unit corner entry");
  }
  const double s = 1.0 / m[8];
  return {{m[0] * s - 1.0, m[1] * s, m[2] * s, m[3] * s, m[4] * s - 1.0, m[5] * s, m[6] * s, m[7] * s}};
}

}  // namespace

std::vector<double> softmax_field(std::span<const double> field, double temperature) {
  return softmax_impl(field, temperature);
}

std::vector<double> softmax_field(std::span<const float> field, double temperature) {
  return softmax_impl(field, temperature);
}

StrokeTransform to_pixel_frame(const StrokeTransform& normalized, int width, int height, Point center) {
  return from_matrix(
      multiply(denormalizer(width, height, center), multiply(normalized.matrix(), normalizer(width, height, center))));
}

StrokeTransform to_normalized_frame(const StrokeTransform& pixel, int width, int height, Point center) {
  return from_matrix(
      multiply(normalizer(width, height, center), multiply(pixel.matrix(), denormalizer(width, height, center))));
}

// ---------------------------------------------------------------------------
// Objective

RefinementObjective::RefinementObjective(const SimilarityVolume& volume, const SaliencyMap& saliency,
                                         const Skeleton& skeleton, const AffineTransform& global,
                                         const RefineConfig& cfg)
    : volume_(volume),
      skeleton_(skeleton),
      global_(global),
      cfg_(cfg),
      proto_grid_(volume.proto_grid()),
      target_grid_(volume.target_grid()),
      width_(volume.target_grid().image_width),
      height_(volume.target_grid().image_height),
      saliency_softmax_(softmax_field(std::span<const double>(saliency.values), cfg.softmax_temperature)),
      slice_cache_(static_cast<std::size_t>(volume.proto_grid().cells())) {
  for (const auto& stroke : skeleton.strokes) {
    Point sum{0.0, 0.0};
    for (int k = 0; k < kKeypointsPerStroke; ++k) sum = sum + stroke.keypoint(k);
    centers_.push_back(apply_affine(global, (1.0 / kKeypointsPerStroke) * sum));
  }
  if (!(saliency.grid == target_grid_)) {
    throw Error(ErrorCode::DimMismatch, "saliency grid differs from the target grid");
  }
}

int RefinementObjective::nearest_cell(Point proto_point) const {
  const GridCoord g = pixel_to_grid(proto_point, proto_grid_);
  const int row = std::clamp(static_cast<int>(std::lround(g.row)), 0, proto_grid_.rows - 1);
  const int col = std::clamp(static_cast<int>(std::lround(g.col)), 0, proto_grid_.cols - 1);
  return row * proto_grid_.cols + col;
}

const std::vector<double>& RefinementObjective::slice(int cell) const {
  auto& slot = slice_cache_[static_cast<std::size_t>(cell)];
  if (slot.empty()) slot = softmax_field(volume_.target_slice(cell), cfg_.softmax_temperature);
  return slot;
}

detail::Projected RefinementObjective::project_stroke(std::size_t stroke, const StrokeTransform& local,
                                              Point proto_point) const {
  const Point u = apply_affine(global_, proto_point);
  const Point c = centers_[stroke];
  return project(local, 2.0 * (u.x - c.x) / width_, 2.0 * (u.y - c.y) / height_);
}

Point RefinementObjective::to_pixels(std::size_t stroke, double nx, double ny) const {
  const Point c = centers_[stroke];
  return {c.x + nx * width_ / 2.0, c.y + ny * height_ / 2.0};
}

Point RefinementObjective::map_point(std::size_t stroke, const StrokeTransform& local, Point proto_point) const {
  const detail::Projected m = project_stroke(stroke, local, proto_point);
  return to_pixels(stroke, m.x, m.y);
}

LossEvaluation RefinementObjective::evaluate(std::span<const StrokeTransform> locals,
                                             std::span<const SkeletonSample> samples) const {
  const std::size_t n = skeleton_.strokes.size();
  if (locals.size() != n) throw Error(ErrorCode::InvalidArgument, "one local transform per stroke required");
  LossEvaluation out;
  out.grad.assign(8 * n, 0.0);
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no skeleton samples");

  // Normalized -> grid scale along each axis.
  const double half_rows = target_grid_.rows / 2.0;
  const double half_cols = target_grid_.cols / 2.0;
  const double inv_m = 1.0 / static_cast<double>(samples.size());

  // Samples `field` at the mapped position of prototype point `p` on
  // `stroke` and adds `weight` times its gradient to `g`.
  auto take = [&](const std::vector<double>& field, std::size_t stroke, Point p, double weight, double* g) {
    const detail::Projected m = project_stroke(stroke, locals[stroke], p);
    const GridCoord t = pixel_to_grid(to_pixels(stroke, m.x, m.y), target_grid_);
    const Bilinear b = bilinear(field, target_grid_.rows, target_grid_.cols, t.row, t.col);
    for (int k = 0; k < 8; ++k) g[k] += weight * (b.d_col * half_cols * m.dx[k] + b.d_row * half_rows * m.dy[k]);
    return b.value;
  };

  double sim = 0.0, sal = 0.0;
  for (const auto& s : samples) {
    double* g = out.grad.data() + 8 * s.stroke;
    // A slice records where its cell center lands, so the similarity term
    // follows the nearest cell center rather than the point itself.
    const int cell = nearest_cell(s.point);
    const Point center = grid_to_pixel(
        {static_cast<double>(cell / proto_grid_.cols), static_cast<double>(cell % proto_grid_.cols)}, proto_grid_);
    sim -= inv_m * take(slice(cell), s.stroke, center, -inv_m * cfg_.lambda_sim, g);
    sal -= inv_m * take(saliency_softmax_, s.stroke, s.point, -inv_m * cfg_.lambda_sal, g);
  }

  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 8; ++k) {
      const double v = locals[i].p[k];
      l1 += std::abs(v);
      const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      out.grad[8 * i + k] += cfg_.lambda_reg * sign / static_cast<double>(n);
    }
  }
  l1 /= static_cast<double>(n);

  // Out-of-bounds: largest excursion of any keypoint coordinate beyond
  // [0, W) x [0, H); the first maximal coordinate takes the sub-gradient.
  double oob = 0.0;
  std::size_t arg_stroke = 0;
  double arg_sign = 0.0;
  bool arg_is_x = true;
  detail::Projected arg_proj;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < kKeypointsPerStroke; ++k) {
      const detail::Projected m = project_stroke(i, locals[i], skeleton_.strokes[i].keypoint(k));
      const auto [x, y] = to_pixels(i, m.x, m.y);
      const std::array<std::pair<double, double>, 4> excess = {
          std::pair{-x, -1.0}, std::pair{x - width_, 1.0}, std::pair{-y, -1.0}, std::pair{y - height_, 1.0}};
      for (int e = 0; e < 4; ++e) {
        if (excess[e].first > oob) {
          oob = excess[e].first;
          arg_stroke = i;
          arg_sign = excess[e].second;
          arg_is_x = e < 2;
          arg_proj = m;
        }
      }
    }
  }
  if (oob > 0.0) {
    for (int k = 0; k < 8; ++k) {
      const double d = arg_is_x ? width_ / 2.0 * arg_proj.dx[k] : height_ / 2.0 * arg_proj.dy[k];
      out.grad[8 * arg_stroke + k] += cfg_.lambda_reg * arg_sign * d;
    }
  }

  out.loss.sim = sim;
  out.loss.sal = sal;
  out.loss.l1 = l1;
  out.loss.oob = oob;
  out.loss.total = cfg_.lambda_sim * sim + cfg_.lambda_sal * sal + cfg_.lambda_reg * (l1 + oob);
  return out;
}

LossEvaluation loss_and_gradient(const SimilarityVolume& volume, const SaliencyMap& saliency,
                                 const Skeleton& skeleton, const AffineTransform& global,
                                 std::span<const StrokeTransform> locals, std::span<const SkeletonSample> samples,
                                 const RefineConfig& cfg) {
  return RefinementObjective(volume, saliency, skeleton, global, cfg).evaluate(locals, samples);
}

// ---------------------------------------------------------------------------
// Optimization

RefinementResult refine(const SimilarityVolume& volume, const SaliencyMap& saliency, const Skeleton& skeleton,
                        const AffineTransform& global, const RefineConfig& cfg) {
  cfg.validate();
  validate(skeleton);
  const RefinementObjective objective(volume, saliency, skeleton, global, cfg);
  const std::size_t n = skeleton.strokes.size();
  std::vector<double> params(8 * n, 0.0);
  std::vector<StrokeTransform> locals(n);
  Adam adam(params.size(), {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  std::mt19937_64 rng(cfg.rng_seed);

  RefinementResult result;
  result.loss_trace.reserve(cfg.iterations);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(params.begin() + 8 * i, 8, locals[i].p.begin());
    const auto samples = sample_skeleton_points(skeleton, cfg.points_per_segment, rng);
    const LossEvaluation eval = objective.evaluate(locals, samples);
    result.loss_trace.push_back(eval.loss);
    adam.step(params, eval.grad);
  }
  for (std::size_t i = 0; i < n; ++i) std::copy_n(params.begin() + 8 * i, 8, locals[i].p.begin());

  result.normalized_locals = locals;
  result.locals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.locals.push_back(to_pixel_frame(locals[i], objective.target_width(), objective.target_height(),
                                           objective.stroke_center(i)));
  }
  result.final_skeleton = transform_skeleton(skeleton, global, result.locals);
  return result;
}

std::string loss_trace_csv(const std::vector<LossBreakdown>& trace) {
  std::ostringstream out;
  out.precision(10);
  out << "iteration,total,sim,sal,l1,oob\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& l = trace[i];
    out << i << ',' << l.total << ',' << l.sim << ',' << l.sal << ',' << l.l1 << ',' << l.oob << '\n';
  }
  return out.str();
}

}  // namespace protosnap
