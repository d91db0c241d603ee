#include "protosnap/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <algorithm>
#include <atomic>
#include <thread>

#include "protosnap/error.hpp"

namespace protosnap {

PipelineConfig PipelineConfig::with_seed(std::uint64_t s) const {
  PipelineConfig out = *this;
  out.seed = s;
  out.ransac.rng_seed = s;
  out.refine.rng_seed = s;
  return out;
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  const auto& r = cfg.ransac;
  const auto& f = cfg.refine;
  return {{"seed", cfg.seed},
          {"features", cfg.features == FeatureBackend::Builtin ? "builtin" : "file"},
          {"grid", cfg.grid},
          {"no_refine", cfg.no_refine},
          {"ransac",
           {{"iterations", r.iterations},
            {"sample_size", r.sample_size},
            {"inlier_threshold", r.inlier_threshold},
            {"runs", r.runs},
            {"rng_seed", r.rng_seed},
            {"refit", r.refit},
            {"foreground_threshold", r.foreground_threshold}}},
          {"refine",
           {{"lambda_sim", f.lambda_sim},
            {"lambda_sal", f.lambda_sal},
            {"lambda_reg", f.lambda_reg},
            {"iterations", f.iterations},
            {"learning_rate", f.learning_rate},
            {"softmax_temperature", f.softmax_temperature},
            {"points_per_segment", f.points_per_segment},
            {"adam_beta1", f.adam_beta1},
            {"adam_beta2", f.adam_beta2},
            {"adam_eps", f.adam_eps},
            {"rng_seed", f.rng_seed}}}};
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + name + "] " + e.what());
  }
}

}  // namespace

AlignmentResult align_sign(const AlignInputs& in, const PipelineConfig& cfg) {
  const auto volume = stage("features", [&] {
    if (cfg.features == FeatureBackend::File) {
      if (!in.proto_features || !in.target_features) {
        throw Error(ErrorCode::InvalidArgument, "file backend needs prototype and target feature maps");
      }
      return std::make_shared<const SimilarityVolume>(similarity_volume(*in.proto_features, *in.target_features));
    }
    if (!in.target_image) throw Error(ErrorCode::InvalidArgument, "built-in backend needs a target image");
    return std::make_shared<const SimilarityVolume>(
        similarity_volume(extract_builtin_features(in.proto_image, cfg.grid, cfg.grid),
                          extract_builtin_features(*in.target_image, cfg.grid, cfg.grid)));
  });

  AlignmentResult result;
  result.target_width = volume->target_grid().image_width;
  result.target_height = volume->target_grid().image_height;
  result.global = stage("global", [&] { return global_align(volume, in.proto_image, cfg.ransac); });
  result.global_skeleton = transform_skeleton(in.proto_skeleton, result.global.transform);
  result.final_skeleton = result.global_skeleton;
  if (cfg.no_refine) return result;

  result.saliency = stage("saliency", [&] { return compute_saliency(*volume, in.proto_image, cfg.ransac.foreground_threshold); });
  result.refinement = stage("refine", [&] {
    return refine(*volume, *result.saliency, in.proto_skeleton, result.global.transform, cfg.refine);
  });
  result.final_skeleton = result.refinement->final_skeleton;
  return result;
}

nlohmann::json alignment_to_json(const AlignmentResult& r) {
  nlohmann::json j = {{"target_size", {r.target_width, r.target_height}},
                      {"global",
                       {{"transform", affine_to_json(r.global.transform)},
                        {"inliers", r.global.inliers.size()},
                        {"spread_score", r.global.spread_score},
                        {"p_proto", r.global.p_proto},
                        {"p_scan", r.global.p_scan},
                        {"run_index", r.global.run_index},
                        {"runs", run_diagnostics_to_json(r.global.runs)}}}};
  if (r.refinement) {
    nlohmann::json locals = nlohmann::json::array();
    for (const auto& l : r.refinement->locals) locals.push_back(stroke_transform_to_json(l));
    const auto& trace = r.refinement->loss_trace;
    j["refine"] = {{"locals", locals},
                   {"initial_loss", trace.front().total},
                   {"final_loss", trace.back().total},
                   {"iterations", trace.size()}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Tablets

TabletSpec load_tablet_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open tablet spec " + path.string());
  TabletSpec spec;
  try {
    const auto j = nlohmann::json::parse(in);
    const auto base = path.parent_path();
    spec.image_path = base / j.at("image").get<std::string>();
    spec.prototype_dir = base / j.at("prototypes").get<std::string>();
    for (const auto& b : j.at("boxes")) {
      spec.boxes.push_back({b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(), b.at("h").get<int>(),
                            b.at("sign").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return spec;
}

bool HandCopy::all_ok() const {
  return std::all_of(boxes.begin(), boxes.end(), [](const BoxResult& b) { return b.ok; });
}

AffineTransform crop_to_tablet(const TabletBox& box) {
  return AffineTransform({static_cast<double>(box.w) / kCropSize, 0.0, static_cast<double>(box.x), 0.0,
                          static_cast<double>(box.h) / kCropSize, static_cast<double>(box.y)});
}

HandCopy align_tablet(const TabletSpec& spec, const GrayImage& tablet, const PipelineConfig& cfg) {
  HandCopy out;
  out.width = tablet.width;
  out.height = tablet.height;
  out.boxes.resize(spec.boxes.size());

  auto process = [&](std::size_t i) {
    BoxResult& res = out.boxes[i];
    res.box = spec.boxes[i];
    const TabletBox& b = res.box;
    try {
      const GrayImage target = resize(crop(tablet, b.x, b.y, b.w, b.h), kCropSize, kCropSize);
      AlignInputs inputs;
      inputs.proto_image = stage("load", [&] { return load_image(spec.prototype_dir / (b.sign_name + ".png")); });
      inputs.proto_skeleton = stage("load", [&] { return load_skeleton(spec.prototype_dir / (b.sign_name + ".json")); });
      inputs.target_image = target;
      PipelineConfig unit = cfg.with_seed(cfg.seed + i);
      unit.features = FeatureBackend::Builtin;
      res.alignment = align_sign(inputs, unit);
      res.skeleton = transform_skeleton(res.alignment->final_skeleton, crop_to_tablet(b));
      res.ok = true;
    } catch (const Error& e) {
      res.ok = false;
      res.error = e.what();
    }
  };

  // Bounded pool; every unit writes only its own slot.
  const std::size_t workers = std::max(1, cfg.workers);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < std::min(workers, spec.boxes.size()); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < spec.boxes.size(); i = next++) process(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

std::array<std::uint8_t, 3> palette_color(std::size_t index) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 10> kPalette = {{{230, 25, 75},
                                                                           {60, 180, 75},
                                                                           {0, 130, 200},
                                                                           {245, 130, 48},
                                                                           {145, 30, 180},
                                                                           {70, 240, 240},
                                                                           {240, 50, 230},
                                                                           {210, 245, 60},
                                                                           {0, 128, 128},
                                                                           {170, 110, 40}}};
  return kPalette[index % kPalette.size()];
}

std::string render_svg(int width, int height, const std::vector<Skeleton>& skeletons,
                       const std::string& background_href) {
  std::ostringstream out;
  char buf[160];
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  if (!background_href.empty()) {
    out << "  <image x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" xlink:href=\""
        << background_href << "\"/>\n";
  }
  for (std::size_t i = 0; i < skeletons.size(); ++i) {
    const auto c = palette_color(i);
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
    out << "  <g id=\"sign-" << i << "\" class=\"" << skeletons[i].sign_name << "\" stroke=\"" << buf
        << "\" fill=\"none\" stroke-width=\"2\">\n";
    for (const auto& s : skeletons[i].strokes) {
      std::snprintf(buf, sizeof buf, "    <path d=\"M %.2f %.2f L %.2f %.2f L %.2f %.2f Z\"/>\n", s.head_a.x,
                    s.head_a.y, s.head_b.x, s.head_b.y, s.head_c.x, s.head_c.y);
      out << buf;
      const Point h = s.head_centroid();
      std::snprintf(buf, sizeof buf, "    <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\"/>\n", h.x, h.y, s.tail.x,
                    s.tail.y);
      out << buf;
    }
    out << "  </g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void draw_skeleton(RgbImage& image, const Skeleton& skeleton, std::array<std::uint8_t, 3> color, double width) {
  for (const auto& s : skeleton.strokes) {
    draw_line(image, s.head_a, s.head_b, width, color);
    draw_line(image, s.head_b, s.head_c, width, color);
    draw_line(image, s.head_c, s.head_a, width, color);
    draw_line(image, s.head_centroid(), s.tail, width, color);
  }
}

}  // namespace protosnap
