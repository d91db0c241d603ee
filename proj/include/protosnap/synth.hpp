#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "protosnap/geometry.hpp"
#include "protosnap/image.hpp"

namespace protosnap {

struct RenderOptions {
  int width = 512;
  int height = 512;
  double stroke_width = 12.0;
  double noise_sigma = 8.0;
  float foreground = 30.0f;
  float background = 230.0f;
};

/// Tail polygon of a stroke: starts at the midpoint of the head edge closest
/// to the tail with full stroke width and tapers to a quarter of it.
std::vector<Point> tail_polygon(const Stroke& stroke, double stroke_width);

/// Filled head triangles and tapered tails on a light ground, plus Gaussian
/// pixel noise. Throws OutOfCanvas if a keypoint lies outside the canvas.
GrayImage render_skeleton(const Skeleton& skeleton, const RenderOptions& opts, std::mt19937_64& rng);
GrayImage render_skeleton(const Skeleton& skeleton, const RenderOptions& opts, std::uint64_t seed = 0);

struct PerturbSpec {
  double rotation_max = 10.0;  // degrees
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translation_max = 20.0;       // pixels
  double per_stroke_jitter_max = 5.0;  // pixels
  std::uint64_t rng_seed = 0;

  void validate() const;
};

nlohmann::json perturb_spec_to_json(const PerturbSpec& spec);

struct SynthCase {
  GrayImage target;
  Skeleton gt;
  AffineTransform planted;
  /// Keypoint offsets added after the global map, 4 per stroke.
  std::vector<Point> jitter;
};

/// Samples a similarity transform about the canvas center and truncated
/// Gaussian keypoint jitter (sigma = max/2); redraws up to 100 times until
/// every keypoint is inside the canvas, else CannotFitCanvas.
SynthCase make_case(const Skeleton& proto, const PerturbSpec& spec, const RenderOptions& render = {});

struct CorpusEntry {
  std::filesystem::path image_path;
  std::filesystem::path gt_annotation_path;
  std::uint64_t seed = 0;
  PerturbSpec spec;
};

/// Writes the rendered prototype, `cases` targets with GT annotations and a
/// manifest.json into `out_dir`. Case i uses seed + i.
std::vector<CorpusEntry> generate_corpus(const Skeleton& proto, const PerturbSpec& spec, int cases,
                                         const RenderOptions& render, const std::filesystem::path& out_dir);

std::vector<CorpusEntry> load_manifest(const std::filesystem::path& path);

}  // namespace protosnap
