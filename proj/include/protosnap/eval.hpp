#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "protosnap/geometry.hpp"

namespace protosnap {

/// Keypoints of one sign in one image, 4 per stroke.
struct Annotation {
  std::string sign_name;
  std::vector<Point> keypoints;
  int image_width = 0;
  int image_height = 0;
  /// Full skeleton when read from a skeleton-shaped file.
  Skeleton skeleton;

  static Annotation from_skeleton(const Skeleton& s, int width, int height);
};

/// Skeleton JSON plus "image_size": [width, height].
Annotation load_annotation(const std::filesystem::path& path);
void save_annotation(const Annotation& annotation, const std::filesystem::path& path);

struct MatchCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Greedy one-to-one matching: candidate pairs within `threshold` are taken
/// in order of increasing distance (ties by pred index, then gt index) when
/// both endpoints are still free.
MatchCounts match_keypoints(const std::vector<Point>& pred, const std::vector<Point>& gt, double threshold);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  MatchCounts counts;
};

/// 0/0 is reported as 0 for every ratio.
Prf prf_from_counts(const MatchCounts& counts);

struct MetricReport {
  std::vector<double> thresholds;
  std::vector<Prf> overall;                        // one per threshold
  std::map<std::string, std::vector<Prf>> per_sign;  // sign name -> one per threshold
  int images = 0;
};

inline const std::vector<double> kDefaultThresholds = {20.0, 30.0, 40.0};

/// Micro-averaged metrics. Both maps are keyed by image; KeyMismatch if the
/// key sets or the sign names differ.
MetricReport evaluate_corpus(const std::map<std::string, Annotation>& pred,
                             const std::map<std::string, Annotation>& gt,
                             const std::vector<double>& thresholds = kDefaultThresholds);

nlohmann::json report_to_json(const MetricReport& report);
std::string report_to_table(const MetricReport& report);

}  // namespace protosnap
