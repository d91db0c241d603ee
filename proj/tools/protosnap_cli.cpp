// protosnap: align skeleton prototypes to sign images, render hand copies,
// generate synthetic corpora and score keypoint predictions.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protosnap/correspondence.hpp"
#include "protosnap/error.hpp"
#include "protosnap/eval.hpp"
#include "protosnap/features.hpp"
#include "protosnap/pipeline.hpp"
#include "protosnap/saliency.hpp"
#include "protosnap/synth.hpp"

namespace fs = std::filesystem;
using namespace protosnap;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Written next to every output set. Holds no output paths or timestamps so
/// repeated runs stay byte-identical.
void write_run_record(const fs::path& dir, const std::string& command, nlohmann::json args) {
  write_json(dir / "run_record.json",
             {{"tool", "protosnap"}, {"version", kVersion}, {"command", command}, {"args", std::move(args)}});
}

struct PipelineFlags {
  PipelineConfig cfg;
  std::string features = "builtin";
  bool no_refit = false;

  void add(CLI::App* app) {
    app->add_option("--features", features, "Feature backend")->check(CLI::IsMember({"builtin", "file"}));
    app->add_option("--seed", cfg.seed, "Base RNG seed");
    app->add_option("--runs", cfg.ransac.runs, "Global alignment rounds");
    app->add_option("--ransac-iters", cfg.ransac.iterations, "RANSAC iterations per round");
    app->add_option("--ransac-sample", cfg.ransac.sample_size, "Correspondences per RANSAC sample");
    app->add_option("--inlier-thresh", cfg.ransac.inlier_threshold, "Inlier distance at 512 px");
    app->add_flag("--no-refine", cfg.no_refine, "Stop after the global stage");
    app->add_flag("--no-refit", no_refit, "Return the best sampled RANSAC model without refitting");
    app->add_option("--lambda-sim", cfg.refine.lambda_sim, "Similarity loss weight");
    app->add_option("--lambda-sal", cfg.refine.lambda_sal, "Saliency loss weight");
    app->add_option("--lambda-reg", cfg.refine.lambda_reg, "Regularization weight");
    app->add_option("--temperature", cfg.refine.softmax_temperature, "Softmax temperature");
    app->add_option("--iters", cfg.refine.iterations, "Refinement iterations");
    app->add_option("--lr", cfg.refine.learning_rate, "Adam learning rate");
    app->add_option("--points-per-segment", cfg.refine.points_per_segment, "Random samples per skeleton edge");
    app->add_option("--grid", cfg.grid, "Built-in feature grid size");
    app->add_option("--workers", cfg.workers, "Worker threads for tablet boxes");
  }

  PipelineConfig resolve() const {
    PipelineConfig out = cfg.with_seed(cfg.seed);
    out.features = features == "file" ? FeatureBackend::File : FeatureBackend::Builtin;
    out.ransac.refit = !no_refit;
    out.ransac.validate();
    out.refine.validate();
    return out;
  }
};

struct AlignOutputs {
  fs::path out_dir = ".";
  bool svg = false;
  bool png = false;
  bool dump_corrs = false;
};

void write_alignment(const fs::path& dir, const std::string& stem, const AlignmentResult& result,
                     const GrayImage* target, const AlignOutputs& outputs) {
  save_annotation(Annotation::from_skeleton(result.final_skeleton, result.target_width, result.target_height),
                  dir / (stem + ".json"));
  write_json(dir / (stem + ".alignment.json"), alignment_to_json(result));
  if (outputs.dump_corrs) {
    const auto corrs = best_buddies(*result.global.volume);
    write_json(dir / (stem + ".corrs.json"), correspondences_to_json(corrs));
  }
  if (result.refinement) write_text(dir / (stem + ".loss.csv"), loss_trace_csv(result.refinement->loss_trace));
  if (outputs.svg) {
    write_text(dir / (stem + ".svg"),
               render_svg(result.target_width, result.target_height, {result.final_skeleton}));
  }
  if (outputs.png && target != nullptr) {
    RgbImage canvas = RgbImage::from_gray(*target);
    draw_skeleton(canvas, result.final_skeleton, palette_color(0));
    save_png(canvas, dir / (stem + ".overlay.png"));
  }
}

// ---------------------------------------------------------------------------

int run_align(const PipelineFlags& flags, const std::string& proto_img, const std::string& proto_skel,
              const std::string& target, const std::string& manifest, const std::string& proto_fmap,
              const std::string& target_fmap, const AlignOutputs& outputs) {
  const PipelineConfig cfg = flags.resolve();
  fs::create_directories(outputs.out_dir);

  fs::path proto_img_path = proto_img, proto_skel_path = proto_skel;
  if (!manifest.empty()) {
    const auto base = fs::path(manifest).parent_path();
    if (proto_img_path.empty()) proto_img_path = base / "prototype.png";
    if (proto_skel_path.empty()) proto_skel_path = base / "prototype.json";
  }
  AlignInputs inputs;
  try {
    inputs.proto_image = load_image(proto_img_path);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[load] ") + e.what());
  }
  try {
    inputs.proto_skeleton = load_skeleton(proto_skel_path);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[load] ") + e.what());
  }

  nlohmann::json args = {{"config", config_to_json(cfg)},
                         {"proto_img", proto_img_path.string()},
                         {"proto_skel", proto_skel_path.string()}};

  // Single sign.
  if (manifest.empty()) {
    std::optional<GrayImage> target_image;
    if (!target.empty()) target_image = load_image(target);
    if (cfg.features == FeatureBackend::File) {
      inputs.proto_features = load_feature_map(proto_fmap);
      inputs.target_features = load_feature_map(target_fmap);
      args["proto_fmap"] = proto_fmap;
      args["target_fmap"] = target_fmap;
    }
    inputs.target_image = target_image;
    args["target"] = target;
    const AlignmentResult result = align_sign(inputs, cfg);
    const std::string stem = !target.empty() ? fs::path(target).stem().string() : fs::path(target_fmap).stem().string();
    write_alignment(outputs.out_dir, stem, result, target_image ? &*target_image : nullptr, outputs);
    write_run_record(outputs.out_dir, "align", args);
    return 0;
  }

  // Corpus: one unit per manifest entry, seed + index.
  const auto entries = load_manifest(manifest);
  args["manifest"] = manifest;
  int failures = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string stem = entries[i].image_path.stem().string();
    try {
      inputs.target_image = load_image(entries[i].image_path);
      const AlignmentResult result = align_sign(inputs, cfg.with_seed(cfg.seed + i));
      write_alignment(outputs.out_dir, stem, result, &*inputs.target_image, outputs);
    } catch (const Error& e) {
      ++failures;
      std::cerr << stem << ": " << e.what() << '\n';
    }
  }
  write_run_record(outputs.out_dir, "align", args);
  std::cout << "aligned " << entries.size() - failures << "/" << entries.size() << " cases\n";
  return failures == 0 ? 0 : 1;
}

int run_tablet(const PipelineFlags& flags, const std::string& spec_path, const AlignOutputs& outputs) {
  const PipelineConfig cfg = flags.resolve();
  const TabletSpec spec = load_tablet_spec(spec_path);
  const GrayImage tablet = load_image(spec.image_path);
  fs::create_directories(outputs.out_dir);

  const HandCopy copy = align_tablet(spec, tablet, cfg);
  std::vector<Skeleton> skeletons;
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < copy.boxes.size(); ++i) {
    const auto& b = copy.boxes[i];
    nlohmann::json j = {{"index", i}, {"sign", b.box.sign_name}, {"ok", b.ok}};
    if (b.ok) {
      skeletons.push_back(b.skeleton);
      j["skeleton"] = skeleton_to_json(b.skeleton);
    } else {
      j["error"] = b.error;
      std::cerr << "box " << i << " (" << b.box.sign_name << "): " << b.error << '\n';
    }
    summary.push_back(j);
  }
  write_json(outputs.out_dir / "handcopy.json", summary);
  if (outputs.svg || !outputs.png) {
    const auto href = fs::relative(fs::absolute(spec.image_path), fs::absolute(outputs.out_dir)).generic_string();
    write_text(outputs.out_dir / "handcopy.svg", render_svg(copy.width, copy.height, skeletons, href));
  }
  if (outputs.png) {
    RgbImage canvas = RgbImage::from_gray(tablet);
    for (std::size_t i = 0; i < skeletons.size(); ++i) draw_skeleton(canvas, skeletons[i], palette_color(i));
    save_png(canvas, outputs.out_dir / "handcopy.png");
  }
  write_run_record(outputs.out_dir, "tablet", {{"config", config_to_json(cfg)}, {"spec", spec_path}});
  std::cout << "aligned " << skeletons.size() << "/" << copy.boxes.size() << " boxes\n";
  return copy.all_ok() ? 0 : 1;
}

int run_saliency(const std::string& proto_img, const std::string& target, const std::string& proto_fmap,
                 const std::string& target_fmap, int grid, const std::string& out) {
  const GrayImage proto = load_image(proto_img);
  std::optional<SimilarityVolume> volume;
  if (!proto_fmap.empty()) {
    volume.emplace(similarity_volume(load_feature_map(proto_fmap), load_feature_map(target_fmap)));
  } else {
    volume.emplace(similarity_volume(extract_builtin_features(proto, grid, grid),
                                     extract_builtin_features(load_image(target), grid, grid)));
  }
  save_image(saliency_to_image(compute_saliency(*volume, proto)), out);
  return 0;
}

int run_synth(const std::string& proto_skel, int cases, const PerturbSpec& spec, const RenderOptions& render,
              const fs::path& out_dir) {
  const Skeleton proto = load_skeleton(proto_skel);
  generate_corpus(proto, spec, cases, render, out_dir);
  write_run_record(out_dir, "synth",
                   {{"proto_skel", proto_skel},
                    {"cases", cases},
                    {"spec", perturb_spec_to_json(spec)},
                    {"render",
                     {{"width", render.width},
                      {"height", render.height},
                      {"stroke_width", render.stroke_width},
                      {"noise_sigma", render.noise_sigma}}}});
  std::cout << "wrote " << cases << " cases to " << out_dir.string() << '\n';
  return 0;
}

std::map<std::string, Annotation> load_ground_truth(const fs::path& gt) {
  std::map<std::string, Annotation> out;
  if (fs::is_directory(gt)) {
    for (const auto& entry : fs::directory_iterator(gt)) {
      const auto name = entry.path().filename().string();
      const auto suffix = std::string(".gt.json");
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        out[name.substr(0, name.size() - suffix.size())] = load_annotation(entry.path());
      }
    }
    return out;
  }
  for (const auto& e : load_manifest(gt)) out[e.image_path.stem().string()] = load_annotation(e.gt_annotation_path);
  return out;
}

int run_eval(const std::string& gt_path, const std::string& pred_dir, const std::vector<double>& thresholds,
             const std::string& out) {
  const auto gt = load_ground_truth(gt_path);
  std::map<std::string, Annotation> pred;
  for (const auto& [key, _] : gt) {
    for (const auto& name : {key + ".json", key + ".gt.json"}) {
      const fs::path p = fs::path(pred_dir) / name;
      if (fs::exists(p)) {
        pred[key] = load_annotation(p);
        break;
      }
    }
  }
  const MetricReport report = evaluate_corpus(pred, gt, thresholds);
  std::cout << report_to_table(report);
  if (!out.empty()) write_json(out, report_to_json(report));
  return 0;
}

int run_features(const std::string& image, const std::string& out, int grid) {
  save_feature_map(extract_builtin_features(load_image(image), grid, grid), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protosnap: prototype-to-sign skeleton alignment"};
  app.set_config("--config", "", "TOML config file mirroring the flags; flags win");
  app.require_subcommand(1);
  // Lets --config follow the subcommand name.
  app.fallthrough();

  // align
  auto* align = app.add_subcommand("align", "Align a prototype skeleton to one image or a synthetic corpus");
  PipelineFlags align_flags;
  align_flags.add(align);
  std::string proto_img, proto_skel, target, manifest, proto_fmap, target_fmap;
  AlignOutputs align_out;
  align->add_option("--proto-img", proto_img, "Prototype image");
  align->add_option("--proto-skel", proto_skel, "Prototype skeleton JSON");
  align->add_option("--target", target, "Target sign image");
  align->add_option("--manifest", manifest, "Synthetic corpus manifest (aligns every case)");
  align->add_option("--proto-fmap", proto_fmap, "Prototype FMAP file (--features file)");
  align->add_option("--target-fmap", target_fmap, "Target FMAP file (--features file)");
  align->add_option("--out-dir", align_out.out_dir, "Output directory");
  align->add_flag("--svg", align_out.svg, "Write an SVG overlay");
  align->add_flag("--png", align_out.png, "Write a PNG overlay");
  align->add_flag("--dump-corrs", align_out.dump_corrs, "Write best-buddy correspondences as JSON");

  // tablet
  auto* tablet = app.add_subcommand("tablet", "Align every box of a tablet and render a hand copy");
  PipelineFlags tablet_flags;
  tablet_flags.add(tablet);
  std::string tablet_spec;
  AlignOutputs tablet_out;
  tablet->add_option("--spec", tablet_spec, "Tablet spec JSON")->required();
  tablet->add_option("--out-dir", tablet_out.out_dir, "Output directory");
  tablet->add_flag("--svg", tablet_out.svg, "Write handcopy.svg (default when --png is absent)");
  tablet->add_flag("--png", tablet_out.png, "Write handcopy.png");

  // saliency
  auto* sal = app.add_subcommand("saliency", "Write the target saliency map as an image");
  std::string sal_proto, sal_target, sal_pfmap, sal_tfmap, sal_out = "saliency.png";
  int sal_grid = 64;
  sal->add_option("--proto-img", sal_proto, "Prototype image")->required();
  sal->add_option("--target", sal_target, "Target image (built-in features)");
  sal->add_option("--proto-fmap", sal_pfmap, "Prototype FMAP file");
  sal->add_option("--target-fmap", sal_tfmap, "Target FMAP file");
  sal->add_option("--grid", sal_grid, "Built-in feature grid size");
  sal->add_option("--out", sal_out, "Output image");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted perturbations");
  std::string synth_skel;
  int synth_cases = 50;
  PerturbSpec spec;
  RenderOptions render;
  fs::path synth_out = "corpus";
  synth->add_option("--proto-skel", synth_skel, "Prototype skeleton JSON")->required();
  synth->add_option("--cases", synth_cases, "Number of cases");
  synth->add_option("--seed", spec.rng_seed, "Base seed (case i uses seed + i)");
  synth->add_option("--rot-max", spec.rotation_max, "Max rotation in degrees");
  synth->add_option("--scale-min", spec.scale_min, "Min isotropic scale");
  synth->add_option("--scale-max", spec.scale_max, "Max isotropic scale");
  synth->add_option("--trans-max", spec.translation_max, "Max translation in pixels");
  synth->add_option("--jitter-max", spec.per_stroke_jitter_max, "Max keypoint jitter in pixels");
  synth->add_option("--stroke-width", render.stroke_width, "Tail width in pixels");
  synth->add_option("--noise", render.noise_sigma, "Pixel noise sigma");
  synth->add_option("--size", render.width, "Canvas size")->each([&](const std::string&) { render.height = render.width; });
  synth->add_option("--out-dir", synth_out, "Output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Keypoint precision/recall/F1 against ground truth");
  std::string eval_gt, eval_pred, eval_out;
  std::vector<double> thresholds = kDefaultThresholds;
  eval->add_option("--gt", eval_gt, "Corpus manifest or directory of *.gt.json")->required();
  eval->add_option("--pred", eval_pred, "Directory of <key>.json predictions")->required();
  eval->add_option("--thresholds", thresholds, "Distance thresholds in pixels");
  eval->add_option("--out", eval_out, "Write the report as JSON");

  // features
  auto* feats = app.add_subcommand("features", "Extract built-in features to an FMAP file");
  std::string feat_image, feat_out;
  int feat_grid = 64;
  feats->add_option("--image", feat_image, "Input image")->required();
  feats->add_option("--out", feat_out, "Output FMAP file")->required();
  feats->add_option("--grid", feat_grid, "Grid size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*align) {
      if (manifest.empty() && (proto_img.empty() || proto_skel.empty())) {
        std::cerr << "align: --proto-img and --proto-skel are required without --manifest\n";
        return 2;
      }
      return run_align(align_flags, proto_img, proto_skel, target, manifest, proto_fmap, target_fmap, align_out);
    }
    if (*tablet) return run_tablet(tablet_flags, tablet_spec, tablet_out);
    if (*sal) return run_saliency(sal_proto, sal_target, sal_pfmap, sal_tfmap, sal_grid, sal_out);
    if (*synth) return run_synth(synth_skel, synth_cases, spec, render, synth_out);
    if (*eval) return run_eval(eval_gt, eval_pred, thresholds, eval_out);
    if (*feats) return run_features(feat_image, feat_out, feat_grid);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
