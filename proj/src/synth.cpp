#include "protosnap/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "protosnap/error.hpp"
#include "protosnap/eval.hpp"

namespace protosnap {

namespace {

bool inside_polygon(const std::vector<Point>& poly, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

void fill_polygon(GrayImage& image, const std::vector<Point>& poly, float value) {
  double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
  for (const auto& p : poly) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const int r0 = std::max(0, static_cast<int>(std::floor(lo_y)));
  const int r1 = std::min(image.height - 1, static_cast<int>(std::ceil(hi_y)));
  const int c0 = std::max(0, static_cast<int>(std::floor(lo_x)));
  const int c1 = std::min(image.width - 1, static_cast<int>(std::ceil(hi_x)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (inside_polygon(poly, {c + 0.5, r + 0.5})) image.at(r, c) = value;
    }
  }
}

bool in_canvas(const Skeleton& s, int width, int height) {
  for (const auto& p : s.keypoints()) {
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height)) return false;
  }
  return true;
}

}  // namespace

std::vector<Point> tail_polygon(const Stroke& stroke, double stroke_width) {
  const std::array<Point, 3> head = {stroke.head_a, stroke.head_b, stroke.head_c};
  Point start = 0.5 * (head[0] + head[1]);
  for (int e = 1; e < 3; ++e) {
    const Point mid = 0.5 * (head[e] + head[(e + 1) % 3]);
    if (distance(mid, stroke.tail) < distance(start, stroke.tail)) start = mid;
  }
  const Point d = stroke.tail - start;
  const double len = std::hypot(d.x, d.y);
  if (len < 1e-9) return {};
  const Point n{-d.y / len, d.x / len};
  const double w0 = stroke_width / 2.0;
  const double w1 = stroke_width / 8.0;
  return {start + w0 * n, stroke.tail + w1 * n, stroke.tail - w1 * n, start - w0 * n};
}

GrayImage render_skeleton(const Skeleton& skeleton, const RenderOptions& opts, std::mt19937_64& rng) {
  if (!in_canvas(skeleton, opts.width, opts.height)) {
    throw Error(ErrorCode::OutOfCanvas, "skeleton keypoint outside the " + std::to_string(opts.width) + "x" +
                                            std::to_string(opts.height) + " canvas");
  }
  GrayImage image(opts.width, opts.height, opts.background);
  for (const auto& s : skeleton.strokes) {
    fill_polygon(image, {s.head_a, s.head_b, s.head_c}, opts.foreground);
    const auto tail = tail_polygon(s, opts.stroke_width);
    if (!tail.empty()) fill_polygon(image, tail, opts.foreground);
  }
  if (opts.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, opts.noise_sigma);
    for (float& v : image.data) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 255.0));
  }
  return image;
}

GrayImage render_skeleton(const Skeleton& skeleton, const RenderOptions& opts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return render_skeleton(skeleton, opts, rng);
}

void PerturbSpec::validate() const {
  if (!(scale_min > 0.0 && scale_max >= scale_min)) throw Error(ErrorCode::InvalidArgument, "bad scale range");
  if (rotation_max < 0.0 || translation_max < 0.0 || per_stroke_jitter_max < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "perturbation maxima must be non-negative");
  }
}

nlohmann::json perturb_spec_to_json(const PerturbSpec& spec) {
  return {{"rotation_max", spec.rotation_max},
          {"scale_range", {spec.scale_min, spec.scale_max}},
          {"translation_max", spec.translation_max},
          {"per_stroke_jitter_max", spec.per_stroke_jitter_max},
          {"rng_seed", spec.rng_seed}};
}

SynthCase make_case(const Skeleton& proto, const PerturbSpec& spec, const RenderOptions& render) {
  spec.validate();
  validate(proto);
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
  std::normal_distribution<double> gauss(0.0, spec.per_stroke_jitter_max / 2.0);
  const Point center{render.width / 2.0, render.height / 2.0};

  for (int attempt = 0; attempt < 100; ++attempt) {
    const double angle = spec.rotation_max * unit(rng);
    const double s = scale(rng);
    const double tx = spec.translation_max * unit(rng);
    const double ty = spec.translation_max * unit(rng);
    const auto planted = AffineTransform::similarity_about(center, angle, s, tx, ty);

    Skeleton gt = transform_skeleton(proto, planted);
    std::vector<Point> jitter;
    for (auto& stroke : gt.strokes) {
      for (Point* p : {&stroke.head_a, &stroke.head_b, &stroke.head_c, &stroke.tail}) {
        Point d{0.0, 0.0};
        if (spec.per_stroke_jitter_max > 0.0) {
          do {
            d = {gauss(rng), gauss(rng)};
          } while (std::hypot(d.x, d.y) > spec.per_stroke_jitter_max);
        }
        *p = *p + d;
        jitter.push_back(d);
      }
    }
    if (!in_canvas(gt, render.width, render.height)) continue;
    GrayImage target = render_skeleton(gt, render, rng);
    return {std::move(target), std::move(gt), planted, std::move(jitter)};
  }
  throw Error(ErrorCode::CannotFitCanvas, "perturbed skeleton left the canvas in 100 draws");
}

std::vector<CorpusEntry> generate_corpus(const Skeleton& proto, const PerturbSpec& spec, int cases,
                                         const RenderOptions& render, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RenderOptions proto_render = render;
  proto_render.noise_sigma = 0.0;
  save_image(render_skeleton(proto, proto_render), out_dir / "prototype.png");
  save_skeleton(proto, out_dir / "prototype.json");

  std::vector<CorpusEntry> entries;
  nlohmann::json manifest = nlohmann::json::array();
  for (int i = 0; i < cases; ++i) {
    PerturbSpec case_spec = spec;
    case_spec.rng_seed = spec.rng_seed + static_cast<std::uint64_t>(i);
    const SynthCase c = make_case(proto, case_spec, render);
    std::ostringstream stem;
    stem << "case_" << std::setw(4) << std::setfill('0') << i;
    const CorpusEntry entry{stem.str() + ".png", stem.str() + ".gt.json", case_spec.rng_seed, case_spec};
    save_image(c.target, out_dir / entry.image_path);
    save_annotation(Annotation::from_skeleton(c.gt, render.width, render.height), out_dir / entry.gt_annotation_path);
    manifest.push_back({{"image_path", entry.image_path.string()},
                        {"gt_annotation_path", entry.gt_annotation_path.string()},
                        {"seed", entry.seed},
                        {"spec", perturb_spec_to_json(case_spec)}});
    entries.push_back(entry);
  }
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << '\n';
  return entries;
}

std::vector<CorpusEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string());
  std::vector<CorpusEntry> entries;
  try {
    const auto j = nlohmann::json::parse(in);
    const auto base = path.parent_path();
    for (const auto& e : j) {
      CorpusEntry entry;
      entry.image_path = base / e.at("image_path").get<std::string>();
      entry.gt_annotation_path = base / e.at("gt_annotation_path").get<std::string>();
      entry.seed = e.value("seed", std::uint64_t{0});
      if (e.contains("spec")) {
        const auto& s = e["spec"];
        entry.spec.rotation_max = s.value("rotation_max", 0.0);
        entry.spec.scale_min = s.at("scale_range")[0].get<double>();
        entry.spec.scale_max = s.at("scale_range")[1].get<double>();
        entry.spec.translation_max = s.value("translation_max", 0.0);
        entry.spec.per_stroke_jitter_max = s.value("per_stroke_jitter_max", 0.0);
        entry.spec.rng_seed = s.value("rng_seed", std::uint64_t{0});
      }
      entries.push_back(entry);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return entries;
}

}  // namespace protosnap
