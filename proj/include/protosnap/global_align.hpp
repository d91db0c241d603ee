#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protosnap/correspondence.hpp"
#include "protosnap/features.hpp"
#include "protosnap/geometry.hpp"
#include "protosnap/image.hpp"

namespace protosnap {

struct RansacConfig {
  int iterations = 2000;
  int sample_size = 5;
  /// Pixels at a 512-pixel target; global_align rescales for other sizes.
  double inlier_threshold = 50.0;
  int runs = 8;
  std::uint64_t rng_seed = 0;
  /// Least-squares polish on the winning inlier set.
  bool refit = true;
  double foreground_threshold = 128.0;

  void validate() const;
};

struct RansacResult {
  AffineTransform transform;
  /// Inlier set of the best sampled model (the set used for the refit).
  std::vector<Correspondence> inliers;
  int valid_samples = 0;
};

/// Residuals are measured in the target frame: |G·proto - target|.
/// Errors: TooFewCorrespondences, NoValidModel.
RansacResult ransac_affine(const std::vector<Correspondence>& corrs, const RansacConfig& cfg);

struct Spread {
  double p_proto = 0.0;
  double p_scan = 0.0;
};

/// Convex hull of points (counter-clockwise in a y-down frame is irrelevant;
/// the returned polygon has no repeated points). Fewer than three
/// non-collinear points give an empty hull.
std::vector<Point> convex_hull(std::vector<Point> points);
double polygon_area(const std::vector<Point>& polygon);

/// p_proto: share of prototype foreground pixels (centers) inside the hull of
/// inlier prototype points. p_scan: hull area of inlier target points over the
/// target image area.
Spread spread_score(const std::vector<Correspondence>& inliers, const GrayImage& proto_image,
                    int target_width, int target_height, double foreground_threshold = 128.0);

struct RunDiagnostics {
  int run = 0;
  bool ok = false;
  std::string error;
  int correspondences = 0;
  int inliers = 0;
  double p_proto = 0.0;
  double p_scan = 0.0;
  double score = 0.0;
};

struct GlobalAlignment {
  AffineTransform transform;
  std::vector<Correspondence> inliers;
  double spread_score = 0.0;
  double p_proto = 0.0;
  double p_scan = 0.0;
  int run_index = 0;
  /// Volume of the selected run, reused by saliency and refinement.
  std::shared_ptr<const SimilarityVolume> volume;
  std::vector<RunDiagnostics> runs;
};

/// Produces the similarity volume for run `run_index`. Stochastic backbones
/// return different volumes per run.
using VolumeProvider = std::function<std::shared_ptr<const SimilarityVolume>(int run_index)>;

/// Runs cfg.runs rounds of best buddies -> foreground filter -> RANSAC ->
/// spread score, each with seed rng_seed + run index, and keeps the highest
/// score (ties: more inliers, then lower run index). Throws AllRunsFailed if
/// no round succeeds.
GlobalAlignment global_align(const VolumeProvider& volumes, const GrayImage& proto_image,
                             const RansacConfig& cfg);

/// Same, with one fixed volume shared by every run.
GlobalAlignment global_align(std::shared_ptr<const SimilarityVolume> volume, const GrayImage& proto_image,
                             const RansacConfig& cfg);

/// Builds a provider from per-run feature providers.
VolumeProvider volume_provider(std::function<FeatureMap(int)> proto_features,
                               std::function<FeatureMap(int)> target_features);

nlohmann::json run_diagnostics_to_json(const std::vector<RunDiagnostics>& runs);

}  // namespace protosnap
