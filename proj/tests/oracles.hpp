#pragma once

// Test helpers and independent oracles shared by the unit tests and the
// acceptance binary. Nothing here depends on a test framework.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "protosnap/error.hpp"
#include "protosnap/features.hpp"
#include "protosnap/correspondence.hpp"
#include "protosnap/geometry.hpp"
#include "protosnap/global_align.hpp"
#include "protosnap/refine.hpp"
#include "protosnap/saliency.hpp"
#include "protosnap/synth.hpp"

namespace testing {

using namespace protosnap;

inline std::filesystem::path data_dir() { return PROTOSNAP_DATA_DIR; }
inline std::filesystem::path prototype_path(const std::string& sign, const std::string& ext) {
  return data_dir() / "prototypes" / (sign + ext);
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("protosnap_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random unit vectors on a rows x cols grid over a 512 px image.
inline FeatureMap random_feature_map(std::mt19937_64& rng, int channels, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> data;
  for (int p = 0; p < rows * cols; ++p) {
    std::vector<double> v(channels);
    double sq = 0.0;
    for (double& x : v) {
      x = n(rng);
      sq += x * x;
    }
    for (double x : v) data.push_back(static_cast<float>(x / std::sqrt(sq)));
  }
  return FeatureMap(channels, {rows, cols, 512, 512}, std::move(data));
}

inline Skeleton load_prototype(const std::string& sign) { return load_skeleton(prototype_path(sign, ".json")); }

/// Noise-free rendering, the same one synthetic corpora use as prototype image.
inline GrayImage prototype_image(const Skeleton& s) {
  RenderOptions opts;
  opts.noise_sigma = 0.0;
  return render_skeleton(s, opts);
}

inline double max_keypoint_error(const Skeleton& a, const Skeleton& b) {
  const auto pa = a.keypoints(), pb = b.keypoints();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, distance(pa[i], pb[i]));
  return worst;
}

inline Skeleton single_stroke() {
  Skeleton s;
  s.sign_name = "ONE";
  s.strokes.push_back({{100, 100}, {100, 160}, {150, 130}, {400, 130}});
  s.edges = default_edges(1);
  return s;
}


// ---------------------------------------------------------------------------
// Best buddies

using CellPair = std::pair<int, int>;  // proto cell, target cell

/// Exhaustive double argmax with the lowest-index tie rule.
inline std::set<CellPair> brute_force_buddies(const SimilarityVolume& v) {
  const int np = v.proto_grid().cells(), nt = v.target_grid().cells();
  auto value = [&](int p, int t) { return v.values()[static_cast<std::size_t>(p) * nt + t]; };
  std::set<CellPair> out;
  for (int p = 0; p < np; ++p) {
    for (int t = 0; t < nt; ++t) {
      bool row_best = true, col_best = true;
      for (int u = 0; u < nt && row_best; ++u) {
        if (value(p, u) > value(p, t) || (value(p, u) == value(p, t) && u < t)) row_best = false;
      }
      for (int q = 0; q < np && col_best; ++q) {
        if (value(q, t) > value(p, t) || (value(q, t) == value(p, t) && q < p)) col_best = false;
      }
      if (row_best && col_best) out.insert({p, t});
    }
  }
  return out;
}

inline std::set<CellPair> as_cells(const std::vector<Correspondence>& corrs, const SimilarityVolume& v) {
  std::set<CellPair> out;
  auto cell = [](Point p, const GridGeometry& g) {
    const GridCoord c = pixel_to_grid(p, g);
    return static_cast<int>(std::lround(c.row)) * g.cols + static_cast<int>(std::lround(c.col));
  };
  for (const auto& c : corrs) out.insert({cell(c.proto, v.proto_grid()), cell(c.target, v.target_grid())});
  return out;
}

// ---------------------------------------------------------------------------
// Planted affine recovery

struct PlantedTrial {
  AffineTransform planted;
  std::vector<Correspondence> corrs;
};

/// `exact` correspondences under a random similarity-plus-shear about the
/// canvas center (rotation up to `rot_max` degrees, scale in [smin, smax],
/// shift up to `shift_max`) with Gaussian noise, then `outliers` uniform pairs.
inline PlantedTrial planted_trial(std::mt19937_64& rng, int exact = 40, int outliers = 20, double noise = 1.0,
                                  double rot_max = 30.0, double smin = 0.7, double smax = 1.4,
                                  double shift_max = 60.0) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  PlantedTrial t;
  t.planted = AffineTransform::similarity_about({256, 256}, uni(-rot_max, rot_max), uni(smin, smax),
                                                uni(-shift_max, shift_max), uni(-shift_max, shift_max));
  std::normal_distribution<double> n(0.0, noise);
  for (int i = 0; i < exact; ++i) {
    const Point p{uni(64, 448), uni(64, 448)};
    const Point q = apply_affine(t.planted, p);
    t.corrs.push_back({p, {q.x + n(rng), q.y + n(rng)}, 1.0f});
  }
  for (int i = 0; i < outliers; ++i) t.corrs.push_back({{uni(0, 512), uni(0, 512)}, {uni(0, 512), uni(0, 512)}, 0.5f});
  std::shuffle(t.corrs.begin(), t.corrs.end(), rng);
  return t;
}

/// RMS distance between two maps over a 5x5 grid spanning the canvas.
inline double grid_rms(const AffineTransform& a, const AffineTransform& b) {
  double sq = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const Point p{64.0 + 96.0 * j, 64.0 + 96.0 * i};
      const double d = distance(apply_affine(a, p), apply_affine(b, p));
      sq += d * d;
    }
  }
  return std::sqrt(sq / 25.0);
}


// ---------------------------------------------------------------------------
// Finite-difference gradient oracle

/// A prototype, one synthetic target of it and everything the refinement
/// objective needs, built once and shared by many random configurations.
struct GradientScene {
  Skeleton skeleton;
  SynthCase target;
  std::shared_ptr<SimilarityVolume> volume;
  SaliencyMap saliency;
};

inline GradientScene make_gradient_scene(const std::string& sign, std::uint64_t seed) {
  GradientScene scene;
  scene.skeleton = load_prototype(sign);
  const GrayImage proto = prototype_image(scene.skeleton);
  PerturbSpec spec;
  spec.rng_seed = seed;
  scene.target = make_case(scene.skeleton, spec);
  scene.volume = std::make_shared<SimilarityVolume>(
      similarity_volume(extract_builtin_features(proto), extract_builtin_features(scene.target.target)));
  scene.saliency = compute_saliency(*scene.volume, proto);
  return scene;
}

struct GradientConfig {
  AffineTransform global;
  std::vector<StrokeTransform> locals;
  std::vector<SkeletonSample> samples;
  RefineConfig cfg;
};

struct GradientReport {
  double worst_relative = 0.0;
  int parameters = 0;
  LossBreakdown loss;
};

/// Nearest prototype cell center of a prototype point, clamped to the grid.
inline Point nearest_cell_center(Point p, const GridGeometry& g) {
  const GridCoord c = pixel_to_grid(p, g);
  const double row = std::clamp(std::round(c.row), 0.0, g.rows - 1.0);
  const double col = std::clamp(std::round(c.col), 0.0, g.cols - 1.0);
  return grid_to_pixel({row, col}, g);
}

/// Every position at which the objective reads a field: the similarity term
/// at the stroke's mapped cell center, the saliency term at the mapped point,
/// both in target grid units.
inline std::vector<GridCoord> read_positions(const RefinementObjective& obj, const GradientConfig& c,
                                             const GridGeometry& proto, const GridGeometry& target) {
  std::vector<GridCoord> out;
  for (const auto& s : c.samples) {
    const auto& local = c.locals[s.stroke];
    out.push_back(pixel_to_grid(obj.map_point(s.stroke, local, nearest_cell_center(s.point, proto)), target));
    out.push_back(pixel_to_grid(obj.map_point(s.stroke, local, s.point), target));
  }
  return out;
}

/// Signed out-of-bounds excursions of every keypoint coordinate.
inline std::vector<double> excursions(const RefinementObjective& obj, const GradientConfig& c, const Skeleton& s) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.strokes.size(); ++i) {
    for (int k = 0; k < kKeypointsPerStroke; ++k) {
      const Point p = obj.map_point(i, c.locals[i], s.strokes[i].keypoint(k));
      out.insert(out.end(), {-p.x, p.x - obj.target_width(), -p.y, p.y - obj.target_height()});
    }
  }
  return out;
}

/// True when a central difference of step h cannot straddle a kink: no read
/// position crosses a grid line, no parameter crosses zero and the
/// out-of-bounds argmax is unique and positive at every probe.
inline bool smooth_for_differences(const RefinementObjective& obj, const GradientConfig& c, const Skeleton& s,
                                   const GridGeometry& proto, const GridGeometry& target, double h) {
  for (const auto& l : c.locals) {
    for (double v : l.p) {
      if (std::abs(v) < 10.0 * h) return false;
    }
  }
  auto top_two = [](std::vector<double> e) {
    std::partial_sort(e.begin(), e.begin() + 2, e.end(), std::greater<>());
    return std::pair{e[0], e[1]};
  };
  const auto base = read_positions(obj, c, proto, target);
  const auto ex = excursions(obj, c, s);
  const auto arg = std::max_element(ex.begin(), ex.end()) - ex.begin();
  for (std::size_t i = 0; i < c.locals.size(); ++i) {
    for (int k = 0; k < 8; ++k) {
      for (double step : {-h, h}) {
        GradientConfig probe = c;
        probe.locals[i].p[k] += step;
        const auto moved = read_positions(obj, probe, proto, target);
        for (std::size_t q = 0; q < base.size(); ++q) {
          if (std::floor(moved[q].row) != std::floor(base[q].row) || std::floor(moved[q].col) != std::floor(base[q].col)) {
            return false;
          }
        }
        const auto pe = excursions(obj, probe, s);
        const auto [first, second] = top_two(pe);
        if (!(first > 0.0) || first - second < 1e-3) return false;
        if (std::max_element(pe.begin(), pe.end()) - pe.begin() != arg) return false;
      }
    }
  }
  return true;
}

/// Draws a configuration with every loss term active: G is the planted map
/// with a small random perturbation and an extra shift that pushes part of
/// the sign past a random image border; locals are random and nonzero; the
/// loss weights are log-uniform so no term hides behind another.
inline GradientConfig random_gradient_config(const GradientScene& scene, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> logw(std::log(1e-4), 0.0);
  GradientConfig c;
  c.cfg.lambda_sim = std::exp(logw(rng));
  c.cfg.lambda_sal = std::exp(logw(rng));
  c.cfg.lambda_reg = std::exp(logw(rng));

  // Push the sign 5..40 px past one border.
  const Skeleton placed = transform_skeleton(scene.skeleton, scene.target.planted);
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (Point p : placed.keypoints()) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const double push = 22.5 + 17.5 * u(rng);
  double tx = 0.0, ty = 0.0;
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: tx = -lo_x - push; break;
    case 1: tx = 512.0 - hi_x + push; break;
    case 2: ty = -lo_y - push; break;
    default: ty = 512.0 - hi_y + push; break;
  }
  const auto wobble = AffineTransform::similarity_about({256, 256}, 3.0 * u(rng), 1.0 + 0.03 * u(rng),
                                                        tx + 5.0 * u(rng), ty + 5.0 * u(rng));
  c.global = wobble.compose(scene.target.planted);

  c.locals.resize(scene.skeleton.strokes.size());
  for (auto& l : c.locals) {
    for (int k = 0; k < 6; ++k) l.p[k] = 0.03 * u(rng);
    l.p[6] = 0.02 * u(rng);
    l.p[7] = 0.02 * u(rng);
  }
  c.samples = sample_skeleton_points(scene.skeleton, 8, rng);
  return c;
}

/// Central differences against the analytic gradient; relative error is
/// |a - f| / max(|a|, |f|).
inline GradientReport check_gradient(const RefinementObjective& obj, const GradientConfig& c, double h) {
  const LossEvaluation base = obj.evaluate(c.locals, c.samples);
  GradientReport r;
  r.loss = base.loss;
  for (std::size_t i = 0; i < c.locals.size(); ++i) {
    for (int k = 0; k < 8; ++k) {
      auto plus = c.locals, minus = c.locals;
      plus[i].p[k] += h;
      minus[i].p[k] -= h;
      const double fd =
          (obj.evaluate(plus, c.samples).loss.total - obj.evaluate(minus, c.samples).loss.total) / (2.0 * h);
      const double a = base.grad[8 * i + k];
      const double scale = std::max(std::abs(a), std::abs(fd));
      r.worst_relative = std::max(r.worst_relative, scale > 0.0 ? std::abs(a - fd) / scale : 0.0);
      ++r.parameters;
    }
  }
  return r;
}

/// Draws configurations until one is smooth under the stencil; returns the
/// check result and the number of draws it took.
inline std::pair<GradientReport, int> gradient_trial(const GradientScene& scene, std::mt19937_64& rng, double h) {
  for (int draws = 1;; ++draws) {
    const GradientConfig c = random_gradient_config(scene, rng);
    const RefinementObjective obj(*scene.volume, scene.saliency, scene.skeleton, c.global, c.cfg);
    if (!smooth_for_differences(obj, c, scene.skeleton, scene.volume->proto_grid(), scene.volume->target_grid(), h)) {
      continue;
    }
    return {check_gradient(obj, c, h), draws};
  }
}


// ---------------------------------------------------------------------------
// Files and the command-line tool

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// 64-bit FNV-1a of a file's bytes.
inline std::uint64_t file_hash(const std::filesystem::path& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : read_file(p)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Relative path -> hash for every regular file under `dir`.
inline std::map<std::string, std::uint64_t> tree_hashes(const std::filesystem::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).generic_string()] = file_hash(e.path());
  }
  return out;
}

/// Runs the CLI with `args`; stdout and stderr go to `log`. Returns the exit status.
inline int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + PROTOSNAP_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing
