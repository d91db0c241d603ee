#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protosnap/features.hpp"
#include "protosnap/geometry.hpp"
#include "protosnap/global_align.hpp"
#include "protosnap/image.hpp"
#include "protosnap/refine.hpp"
#include "protosnap/saliency.hpp"

namespace protosnap {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCropSize = 512;

enum class FeatureBackend { Builtin, File };

struct PipelineConfig {
  RansacConfig ransac;
  RefineConfig refine;
  FeatureBackend features = FeatureBackend::Builtin;
  int grid = 64;
  bool no_refine = false;
  std::uint64_t seed = 0;
  int workers = 1;

  /// Copies `seed` into the RANSAC and refinement streams.
  PipelineConfig with_seed(std::uint64_t s) const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);

struct AlignInputs {
  GrayImage proto_image;
  Skeleton proto_skeleton;
  /// Required for the built-in backend; also sets the target frame size.
  std::optional<GrayImage> target_image;
  std::optional<FeatureMap> proto_features;
  std::optional<FeatureMap> target_features;
};

struct AlignmentResult {
  GlobalAlignment global;
  std::optional<SaliencyMap> saliency;
  std::optional<RefinementResult> refinement;
  Skeleton global_skeleton;
  Skeleton final_skeleton;
  int target_width = 0;
  int target_height = 0;
};

/// features -> similarity volume -> global alignment -> saliency -> refinement.
/// Errors keep their code and gain a "[stage]" prefix.
AlignmentResult align_sign(const AlignInputs& inputs, const PipelineConfig& cfg);

nlohmann::json alignment_to_json(const AlignmentResult& result);

struct TabletBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  std::string sign_name;
};

struct TabletSpec {
  std::filesystem::path image_path;
  std::filesystem::path prototype_dir;
  std::vector<TabletBox> boxes;
};

/// {"image": ..., "prototypes": ..., "boxes": [{"x","y","w","h","sign"}...]};
/// relative paths resolve against the spec file's directory.
TabletSpec load_tablet_spec(const std::filesystem::path& path);

struct BoxResult {
  TabletBox box;
  bool ok = false;
  std::string error;
  Skeleton skeleton;  // tablet frame
  std::optional<AlignmentResult> alignment;
};

struct HandCopy {
  int width = 0;
  int height = 0;
  std::vector<BoxResult> boxes;

  bool all_ok() const;
};

/// Maps a point of the 512x512 crop frame back into the tablet frame.
AffineTransform crop_to_tablet(const TabletBox& box);

/// Crops and resizes each box, aligns it against <prototype_dir>/<sign>.png
/// and <sign>.json with seed + box index and maps the result back. Failing
/// boxes are reported and skipped.
HandCopy align_tablet(const TabletSpec& spec, const GrayImage& tablet, const PipelineConfig& cfg);

std::array<std::uint8_t, 3> palette_color(std::size_t index);

/// One <g> per skeleton: closed head paths and tail lines.
std::string render_svg(int width, int height, const std::vector<Skeleton>& skeletons,
                       const std::string& background_href = "");
void draw_skeleton(RgbImage& image, const Skeleton& skeleton, std::array<std::uint8_t, 3> color, double width = 2.0);

}  // namespace protosnap
