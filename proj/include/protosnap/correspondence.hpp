#pragma once

#include <vector>

#include <json.hpp>

#include "protosnap/features.hpp"
#include "protosnap/geometry.hpp"
#include "protosnap/image.hpp"

namespace protosnap {

struct Correspondence {
  Point proto;   // prototype frame, pixels
  Point target;  // target frame, pixels
  float score = 0.0f;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

/// Mutual nearest neighbours of the similarity volume, converted to cell
/// centers in pixels. Ties in either argmax go to the lowest row-major index.
/// Output is ordered by prototype cell index.
std::vector<Correspondence> best_buddies(const SimilarityVolume& volume);

/// Keeps correspondences whose prototype point falls on a pixel darker than
/// `intensity_threshold`.
std::vector<Correspondence> filter_foreground(const std::vector<Correspondence>& corrs,
                                              const GrayImage& proto_image,
                                              double intensity_threshold = 128.0);

nlohmann::json correspondences_to_json(const std::vector<Correspondence>& corrs);

}  // namespace protosnap
