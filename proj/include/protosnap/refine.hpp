#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "protosnap/features.hpp"
#include "protosnap/geometry.hpp"
#include "protosnap/saliency.hpp"

namespace protosnap {

struct RefineConfig {
  double lambda_sim = 1.0;
  double lambda_sal = 3e-4;
  double lambda_reg = 1e-4;
  int iterations = 100;
  double learning_rate = 0.01;
  double softmax_temperature = 100.0;
  int points_per_segment = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct SkeletonSample {
  int stroke = 0;
  Point point;  // prototype frame
  bool keypoint = false;
};

/// All stored keypoints (stroke order), then `points_per_segment` uniform
/// random points strictly inside every edge. Edge samples belong to the
/// edge's first stroke.
std::vector<SkeletonSample> sample_skeleton_points(const Skeleton& skeleton, int points_per_segment,
                                                   std::mt19937_64& rng);

/// exp(T*x) / sum exp(T*x), max-subtracted.
std::vector<double> softmax_field(std::span<const double> field, double temperature);
std::vector<double> softmax_field(std::span<const float> field, double temperature);

/// Stroke parameters are optimized in a normalized target frame centered on
/// the stroke, x_n = 2(x - c_x)/W, y_n = 2(y - c_y)/H, where c is the
/// globally mapped mean of the stroke's keypoints. One learning rate then
/// suits every entry and the linear terms barely couple to translation.
/// Both forms describe the same map up to projective scale.
StrokeTransform to_pixel_frame(const StrokeTransform& normalized, int width, int height, Point center);
StrokeTransform to_normalized_frame(const StrokeTransform& pixel, int width, int height, Point center);

struct LossBreakdown {
  double total = 0.0;
  double sim = 0.0;
  double sal = 0.0;
  double l1 = 0.0;
  double oob = 0.0;

  double reg() const { return l1 + oob; }
};

struct LossEvaluation {
  LossBreakdown loss;
  std::vector<double> grad;  // 8 per stroke, StrokeTransform::p order
};

namespace detail {

/// Normalized-frame projective map of one point with its Jacobian with
/// respect to the 8 stroke parameters.
struct Projected {
  double x = 0.0;
  double y = 0.0;
  std::array<double, 8> dx{};
  std::array<double, 8> dy{};
};

}  // namespace detail

/// Refinement objective for one sign. Softmaxed similarity slices are built
/// lazily per prototype cell and cached; the saliency softmax is built once.
class RefinementObjective {
 public:
  RefinementObjective(const SimilarityVolume& volume, const SaliencyMap& saliency, const Skeleton& skeleton,
                      const AffineTransform& global, const RefineConfig& cfg);

  /// `locals` are in the normalized frame. Throws DegenerateProjection if a
  /// transformed point has a vanishing homogeneous coordinate.
  LossEvaluation evaluate(std::span<const StrokeTransform> locals, std::span<const SkeletonSample> samples) const;

  /// Target-frame pixel position of a prototype point of stroke `stroke`
  /// under its normalized-frame transform `local`.
  Point map_point(std::size_t stroke, const StrokeTransform& local, Point proto_point) const;

  /// Origin of stroke `i`'s normalized frame, in target pixels.
  Point stroke_center(std::size_t i) const { return centers_[i]; }
  int target_width() const { return width_; }
  int target_height() const { return height_; }

 private:
  detail::Projected project_stroke(std::size_t stroke, const StrokeTransform& local, Point proto_point) const;
  Point to_pixels(std::size_t stroke, double nx, double ny) const;
  int nearest_cell(Point proto_point) const;
  const std::vector<double>& slice(int cell) const;

  const SimilarityVolume& volume_;
  const Skeleton& skeleton_;
  AffineTransform global_;
  RefineConfig cfg_;
  GridGeometry proto_grid_;
  GridGeometry target_grid_;
  int width_;
  int height_;
  std::vector<Point> centers_;
  std::vector<double> saliency_softmax_;
  mutable std::vector<std::vector<double>> slice_cache_;
};

LossEvaluation loss_and_gradient(const SimilarityVolume& volume, const SaliencyMap& saliency,
                                 const Skeleton& skeleton, const AffineTransform& global,
                                 std::span<const StrokeTransform> locals, std::span<const SkeletonSample> samples,
                                 const RefineConfig& cfg);

struct RefinementResult {
  /// Pixel-frame transforms: final_skeleton == transform_skeleton(proto, G, locals).
  std::vector<StrokeTransform> locals;
  std::vector<StrokeTransform> normalized_locals;
  std::vector<LossBreakdown> loss_trace;  // loss before each Adam step
  Skeleton final_skeleton;
};

/// Adam on all 8N parameters from the identity, fresh edge samples each
/// iteration.
RefinementResult refine(const SimilarityVolume& volume, const SaliencyMap& saliency, const Skeleton& skeleton,
                        const AffineTransform& global, const RefineConfig& cfg);

/// iteration,total,sim,sal,l1,oob
std::string loss_trace_csv(const std::vector<LossBreakdown>& trace);

}  // namespace protosnap
