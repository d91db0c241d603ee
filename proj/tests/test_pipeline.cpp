#include "support.hpp"

#include <fstream>

#include "protosnap/eval.hpp"
#include "protosnap/pipeline.hpp"
#include "protosnap/synth.hpp"

using namespace protosnap;
using testing::check_error;

namespace {

/// Writes <sign>.png and <sign>.json for the given signs into `dir`.
void write_prototypes(const std::filesystem::path& dir, const std::vector<std::string>& signs) {
  for (const auto& sign : signs) {
    const Skeleton s = testing::load_prototype(sign);
    save_image(testing::prototype_image(s), dir / (sign + ".png"));
    save_skeleton(s, dir / (sign + ".json"));
  }
}

AlignInputs inputs_for(const std::string& sign, const GrayImage& target) {
  AlignInputs in;
  in.proto_skeleton = testing::load_prototype(sign);
  in.proto_image = testing::prototype_image(in.proto_skeleton);
  in.target_image = target;
  return in;
}

}  // namespace

TEST_CASE("prototype aligned to itself") {
  const AlignInputs in = inputs_for("KA", testing::prototype_image(testing::load_prototype("KA")));
  const AlignmentResult r = align_sign(in, PipelineConfig{}.with_seed(0));
  CHECK(testing::max_keypoint_error(r.global_skeleton, in.proto_skeleton) < 1.0);
  CHECK(testing::max_keypoint_error(r.final_skeleton, in.proto_skeleton) < 2.0);
  REQUIRE(r.refinement);
  REQUIRE(r.saliency);
  CHECK(r.target_width == 512);

  const auto j = alignment_to_json(r);
  CHECK(j["refine"]["iterations"] == 100);
  CHECK(j["global"]["runs"].size() == 8);
}

TEST_CASE("global-only mode stops before refinement") {
  PerturbSpec spec;
  spec.rng_seed = 12;
  const SynthCase c = make_case(testing::load_prototype("DISH"), spec);
  PipelineConfig cfg;
  cfg.no_refine = true;
  const AlignmentResult r = align_sign(inputs_for("DISH", c.target), cfg);
  CHECK_FALSE(r.refinement);
  CHECK(r.final_skeleton == r.global_skeleton);
  CHECK(alignment_to_json(r).contains("refine") == false);
  const MatchCounts m = match_keypoints(r.final_skeleton.keypoints(), c.gt.keypoints(), 40.0);
  CHECK(m.tp == static_cast<int>(c.gt.keypoints().size()));
}

TEST_CASE("file feature backend") {
  testing::TempDir dir("pipe_fmap");
  const Skeleton ka = testing::load_prototype("KA");
  const GrayImage img = testing::prototype_image(ka);
  save_feature_map(extract_builtin_features(img), dir / "p.fmap");

  AlignInputs in;
  in.proto_skeleton = ka;
  in.proto_image = img;
  in.proto_features = load_feature_map(dir / "p.fmap");
  in.target_features = load_feature_map(dir / "p.fmap");
  PipelineConfig cfg;
  cfg.features = FeatureBackend::File;
  cfg.no_refine = true;
  const AlignmentResult from_file = align_sign(in, cfg);
  CHECK(testing::max_keypoint_error(from_file.final_skeleton, ka) < 1.0);

  in.target_features.reset();
  check_error([&] { align_sign(in, cfg); }, ErrorCode::InvalidArgument);
}

TEST_CASE("stage labels on errors") {
  AlignInputs in = inputs_for("KA", GrayImage(512, 512, 230.0f));
  in.proto_image = GrayImage(512, 512, 255.0f);  // no foreground anywhere
  try {
    align_sign(in, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllRunsFailed);
    CHECK(std::string(e.what()).find("[global]") != std::string::npos);
  }
  in.target_image.reset();
  try {
    align_sign(in, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("[features]") != std::string::npos);
  }
}

TEST_CASE("seeds and config record") {
  PipelineConfig cfg;
  const PipelineConfig s = cfg.with_seed(17);
  CHECK(s.ransac.rng_seed == 17);
  CHECK(s.refine.rng_seed == 17);
  const auto j = config_to_json(s);
  CHECK(j["seed"] == 17);
  CHECK(j["ransac"]["iterations"] == 2000);
  CHECK(j["refine"]["softmax_temperature"] == 100.0);
}

TEST_CASE("crop frame maps back to the tablet") {
  const TabletBox box{100, 40, 256, 128, "KA"};
  const auto t = crop_to_tablet(box);
  CHECK(apply_affine(t, {0, 0}) == Point{100, 40});
  CHECK(apply_affine(t, {512, 512}) == Point{356, 168});
  CHECK(apply_affine(t, {256, 256}) == Point{228, 104});
}

TEST_CASE("tablet of synthetic signs") {
  testing::TempDir dir("tablet");
  write_prototypes(dir.path(), {"KA", "DISH"});

  // Two synthetic 512 px signs side by side on a 1024 x 512 tablet.
  PerturbSpec spec;
  spec.rng_seed = 5;
  const SynthCase left = make_case(testing::load_prototype("KA"), spec);
  spec.rng_seed = 6;
  const SynthCase right = make_case(testing::load_prototype("DISH"), spec);
  GrayImage tablet(1024, 512);
  for (int r = 0; r < 512; ++r) {
    for (int c = 0; c < 512; ++c) {
      tablet.at(r, c) = left.target.at(r, c);
      tablet.at(r, c + 512) = right.target.at(r, c);
    }
  }

  TabletSpec ts;
  ts.prototype_dir = dir.path();
  ts.boxes = {{0, 0, 512, 512, "KA"}, {512, 0, 512, 512, "DISH"}, {900, 100, 300, 300, "KA"}};
  PipelineConfig cfg;
  cfg.seed = 3;
  cfg.workers = 2;
  const HandCopy copy = align_tablet(ts, tablet, cfg);
  REQUIRE(copy.boxes.size() == 3);
  CHECK(copy.boxes[0].ok);
  CHECK(copy.boxes[1].ok);
  CHECK_FALSE(copy.boxes[2].ok);
  CHECK_FALSE(copy.all_ok());
  CHECK(copy.boxes[2].error.find("InvalidArgument") != std::string::npos);

  // Each box matches the single-sign result with its unit seed.
  const AlignmentResult a = align_sign(inputs_for("KA", left.target), cfg.with_seed(3));
  CHECK(copy.boxes[0].skeleton == a.final_skeleton);
  const AlignmentResult b = align_sign(inputs_for("DISH", right.target), cfg.with_seed(4));
  CHECK(copy.boxes[1].skeleton == transform_skeleton(b.final_skeleton, AffineTransform::translation(512, 0)));

  // Worker count does not change the output.
  cfg.workers = 1;
  const HandCopy serial = align_tablet(ts, tablet, cfg);
  CHECK(serial.boxes[1].skeleton == copy.boxes[1].skeleton);

  const std::string svg = render_svg(copy.width, copy.height, {copy.boxes[0].skeleton, copy.boxes[1].skeleton});
  std::size_t groups = 0;
  for (auto pos = svg.find("<g "); pos != std::string::npos; pos = svg.find("<g ", pos + 1)) ++groups;
  CHECK(groups == 2);
}

TEST_CASE("unknown sign and empty tablet") {
  testing::TempDir dir("tablet_empty");
  TabletSpec ts;
  ts.prototype_dir = dir.path();
  ts.boxes = {{0, 0, 100, 100, "NOPE"}};
  const HandCopy copy = align_tablet(ts, GrayImage(200, 200, 200.0f), {});
  REQUIRE(copy.boxes.size() == 1);
  CHECK_FALSE(copy.boxes[0].ok);
  CHECK(copy.boxes[0].error.find("[load]") != std::string::npos);

  TabletSpec none;
  const HandCopy empty = align_tablet(none, GrayImage(200, 100, 200.0f), {});
  CHECK(empty.boxes.empty());
  CHECK(empty.all_ok());
  const std::string svg = render_svg(200, 100, {});
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<g ") == std::string::npos);
}

TEST_CASE("tablet spec file") {
  testing::TempDir dir("tablet_spec");
  std::ofstream(dir / "t.json") << R"({"image": "tab.png", "prototypes": "protos",
    "boxes": [{"x": 1, "y": 2, "w": 30, "h": 40, "sign": "KA"}]})";
  const TabletSpec ts = load_tablet_spec(dir / "t.json");
  CHECK(ts.image_path == dir / "tab.png");
  CHECK(ts.prototype_dir == dir / "protos");
  REQUIRE(ts.boxes.size() == 1);
  CHECK(ts.boxes[0].h == 40);
  CHECK(ts.boxes[0].sign_name == "KA");
  std::ofstream(dir / "bad.json") << R"({"image": "tab.png"})";
  check_error([&] { load_tablet_spec(dir / "bad.json"); }, ErrorCode::Parse);
}
