#include "protosnap/global_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "protosnap/error.hpp"

namespace protosnap {

void RansacConfig::validate() const {
  if (sample_size < 3) throw Error(ErrorCode::InvalidArgument, "sample_size must be at least 3");
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be at least 1");
  if (!(inlier_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "inlier threshold must be positive");
  if (runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be at least 1");
}

RansacResult ransac_affine(const std::vector<Correspondence>& corrs, const RansacConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(corrs.size());
  if (n < cfg.sample_size) {
    throw Error(ErrorCode::TooFewCorrespondences,
                std::to_string(n) + " correspondences, need " + std::to_string(cfg.sample_size));
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Point> src(cfg.sample_size), dst(cfg.sample_size);
  std::vector<char> is_inlier(n), best_mask;
  std::optional<AffineTransform> best;
  int best_count = -1;
  int valid = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    // Partial Fisher-Yates: the first sample_size entries are the sample.
    for (int k = 0; k < cfg.sample_size; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(order[k], order[pick(rng)]);
      src[k] = corrs[order[k]].proto;
      dst[k] = corrs[order[k]].target;
    }
    AffineTransform model;
    try {
      model = fit_affine_least_squares(src, dst);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::RankDeficient) continue;
      throw;
    }
    ++valid;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      is_inlier[i] = distance(apply_affine(model, corrs[i].proto), corrs[i].target) < cfg.inlier_threshold;
      count += is_inlier[i];
    }
    if (count > best_count) {
      best_count = count;
      best = model;
      best_mask = is_inlier;
    }
  }
  if (!best) throw Error(ErrorCode::NoValidModel, "every RANSAC sample was rank deficient");

  RansacResult result{*best, {}, valid};
  std::vector<Point> in_src, in_dst;
  for (int i = 0; i < n; ++i) {
    if (!best_mask[i]) continue;
    result.inliers.push_back(corrs[i]);
    in_src.push_back(corrs[i].proto);
    in_dst.push_back(corrs[i].target);
  }
  if (cfg.refit) {
    try {
      result.transform = fit_affine_least_squares(in_src, in_dst);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RankDeficient) throw;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Spread score

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool inside_convex(const std::vector<Point>& hull, Point p) {
  // Hull is counter-clockwise in the (x, y) algebraic sense.
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < -1e-9) return false;
  }
  return true;
}

}  // namespace

std::vector<Point> convex_hull(std::vector<Point> points) {
  std::sort(points.begin(), points.end(),
            [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return {};
  std::vector<Point> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) return {};
  return hull;
}

double polygon_area(const std::vector<Point>& polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point a = polygon[i];
    const Point b = polygon[(i + 1) % polygon.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

Spread spread_score(const std::vector<Correspondence>& inliers, const GrayImage& proto_image,
                    int target_width, int target_height, double foreground_threshold) {
  std::vector<Point> proto_pts, target_pts;
  for (const auto& c : inliers) {
    proto_pts.push_back(c.proto);
    target_pts.push_back(c.target);
  }
  Spread out;
  const auto proto_hull = convex_hull(proto_pts);
  if (!proto_hull.empty()) {
    double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
    for (const auto& p : proto_hull) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
    long total = 0, covered = 0;
    for (int r = 0; r < proto_image.height; ++r) {
      for (int c = 0; c < proto_image.width; ++c) {
        if (proto_image.at(r, c) >= foreground_threshold) continue;
        ++total;
        const Point p{c + 0.5, r + 0.5};
        if (p.x < lo_x || p.x > hi_x || p.y < lo_y || p.y > hi_y) continue;
        covered += inside_convex(proto_hull, p);
      }
    }
    out.p_proto = total > 0 ? static_cast<double>(covered) / total : 0.0;
  }
  const auto target_hull = convex_hull(target_pts);
  const double area = static_cast<double>(target_width) * target_height;
  if (!target_hull.empty() && area > 0.0) out.p_scan = std::min(1.0, polygon_area(target_hull) / area);
  return out;
}

// ---------------------------------------------------------------------------
// Multi-run selection

GlobalAlignment global_align(const VolumeProvider& volumes, const GrayImage& proto_image,
                             const RansacConfig& cfg) {
  cfg.validate();
  std::optional<GlobalAlignment> best;
  std::vector<RunDiagnostics> diagnostics;
  for (int run = 0; run < cfg.runs; ++run) {
    RunDiagnostics diag;
    diag.run = run;
    try {
      auto volume = volumes(run);
      const auto& tg = volume->target_grid();
      RansacConfig run_cfg = cfg;
      run_cfg.rng_seed = cfg.rng_seed + static_cast<std::uint64_t>(run);
      run_cfg.inlier_threshold = cfg.inlier_threshold * std::max(tg.image_width, tg.image_height) / 512.0;

      const auto corrs = filter_foreground(best_buddies(*volume), proto_image, cfg.foreground_threshold);
      diag.correspondences = static_cast<int>(corrs.size());
      auto fit = ransac_affine(corrs, run_cfg);
      const Spread spread =
          spread_score(fit.inliers, proto_image, tg.image_width, tg.image_height, cfg.foreground_threshold);
      diag.ok = true;
      diag.inliers = static_cast<int>(fit.inliers.size());
      diag.p_proto = spread.p_proto;
      diag.p_scan = spread.p_scan;
      diag.score = spread.p_proto * spread.p_scan;

      const bool better = !best || diag.score > best->spread_score ||
                          (diag.score == best->spread_score &&
                           diag.inliers > static_cast<int>(best->inliers.size()));
      if (better) {
        best = GlobalAlignment{fit.transform, std::move(fit.inliers), diag.score, spread.p_proto,
                               spread.p_scan, run, std::move(volume), {}};
      }
    } catch (const Error& e) {
      diag.ok = false;
      diag.error = e.what();
    }
    diagnostics.push_back(diag);
  }
  if (!best) {
    std::string detail;
    for (const auto& d : diagnostics) detail += "\n  run " + std::to_string(d.run) + ": " + d.error;
    throw Error(ErrorCode::AllRunsFailed, "no global alignment run succeeded" + detail);
  }
  best->runs = std::move(diagnostics);
  return std::move(*best);
}

GlobalAlignment global_align(std::shared_ptr<const SimilarityVolume> volume, const GrayImage& proto_image,
                             const RansacConfig& cfg) {
  return global_align([volume](int) { return volume; }, proto_image, cfg);
}

VolumeProvider volume_provider(std::function<FeatureMap(int)> proto_features,
                               std::function<FeatureMap(int)> target_features) {
  return [proto_features = std::move(proto_features), target_features = std::move(target_features)](int run) {
    return std::make_shared<const SimilarityVolume>(similarity_volume(proto_features(run), target_features(run)));
  };
}

nlohmann::json run_diagnostics_to_json(const std::vector<RunDiagnostics>& runs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : runs) {
    nlohmann::json j = {{"run", d.run}, {"ok", d.ok}};
    if (d.ok) {
      j["correspondences"] = d.correspondences;
      j["inliers"] = d.inliers;
      j["p_proto"] = d.p_proto;
      j["p_scan"] = d.p_scan;
      j["score"] = d.score;
    } else {
      j["error"] = d.error;
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace protosnap
