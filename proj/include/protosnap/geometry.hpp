#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace protosnap {

/// Continuous pixel coordinates: origin at the top-left pixel corner,
/// x to the right, y down.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

Point operator+(Point a, Point b);
Point operator-(Point a, Point b);
Point operator*(double s, Point p);
double distance(Point a, Point b);

/// Keypoint indices inside a stroke. `kHeadCentroid` is a derived point that
/// edges may reference; it is not stored.
inline constexpr int kHeadA = 0;
inline constexpr int kHeadB = 1;
inline constexpr int kHeadC = 2;
inline constexpr int kTail = 3;
inline constexpr int kHeadCentroid = 4;
inline constexpr int kKeypointsPerStroke = 4;

/// One wedge: a triangular head given by three corners plus the tail end.
struct Stroke {
  Point head_a;
  Point head_b;
  Point head_c;
  Point tail;

  /// Keypoint 0..3, or the head centroid for index 4.
  Point keypoint(int index) const;
  Point head_centroid() const;

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

/// A drawn line segment between two keypoints of (possibly different) strokes.
struct Edge {
  int stroke_a = 0;
  int keypoint_a = 0;
  int stroke_b = 0;
  int keypoint_b = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Skeleton {
  std::string sign_name;
  std::vector<Stroke> strokes;
  std::vector<Edge> edges;

  std::size_t stroke_count() const { return strokes.size(); }
  /// Flat list of the stored keypoints, 4 per stroke in stroke order.
  std::vector<Point> keypoints() const;
  Point edge_start(const Edge& e) const;
  Point edge_end(const Edge& e) const;

  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

/// Head triangle edges plus head-centroid-to-tail, for every stroke.
std::vector<Edge> default_edges(std::size_t stroke_count);

/// Throws InvalidArgument unless the skeleton has at least one stroke, all
/// coordinates are finite, edge indices are in range, every stroke touches at
/// least one edge and no head triangle is degenerate.
void validate(const Skeleton& skeleton);

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

Mat3 multiply(const Mat3& a, const Mat3& b);

/// Affine map with fixed bottom row [0 0 1]. Construction rejects
/// non-finite entries and |det| < 1e-9.
class AffineTransform {
 public:
  static constexpr double kMinDeterminant = 1e-9;

  AffineTransform();
  /// Parameters in order g11, g12, g13, g21, g22, g23.
  explicit AffineTransform(const std::array<double, 6>& params);

  static AffineTransform identity() { return AffineTransform(); }
  static AffineTransform translation(double tx, double ty);
  /// Rotation by `degrees` and isotropic `scale` about `center`, then a shift.
  static AffineTransform similarity_about(Point center, double degrees, double scale, double tx,
                                          double ty);

  const std::array<double, 6>& params() const { return params_; }
  double operator()(int row, int col) const;
  double determinant() const;
  Mat3 matrix() const;
  AffineTransform inverse() const;
  /// this ∘ other, i.e. apply `other` first.
  AffineTransform compose(const AffineTransform& other) const;

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;

 private:
  std::array<double, 6> params_;
};

/// Per-stroke perturbation P = I + D where D has entries p11..p23, p31, p32
/// and a zero bottom-right entry. All zeros is the identity.
struct StrokeTransform {
  /// p11, p12, p13, p21, p22, p23, p31, p32.
  std::array<double, 8> p{};

  Mat3 matrix() const;
  bool is_identity() const;

  friend bool operator==(const StrokeTransform&, const StrokeTransform&) = default;
};

Point apply_affine(const AffineTransform& t, Point p);

/// Maps `pt` by P·G in homogeneous coordinates. Throws DegenerateProjection
/// when |z'| < 1e-9.
Point apply_projective(const StrokeTransform& local, const AffineTransform& global, Point pt);

/// Least-squares affine fit of dst ≈ G·src over all pairs. Throws
/// RankDeficient for fewer than three pairs or a singular design matrix, and
/// InvalidArgument when the lists differ in length.
AffineTransform fit_affine_least_squares(std::span<const Point> src, std::span<const Point> dst);

/// Maps every keypoint of stroke i by P_i·G (or G when `locals` is empty).
Skeleton transform_skeleton(const Skeleton& skeleton, const AffineTransform& global,
                            std::span<const StrokeTransform> locals = {});

// JSON: {"sign": str, "strokes": [{"head": [[x,y]x3], "tail": [x,y]}...],
//        "edges": [[si,ki,sj,kj]...] (optional)}
Skeleton skeleton_from_json(const nlohmann::json& j);
nlohmann::json skeleton_to_json(const Skeleton& skeleton);
Skeleton load_skeleton(const std::filesystem::path& path);
void save_skeleton(const Skeleton& skeleton, const std::filesystem::path& path);

nlohmann::json affine_to_json(const AffineTransform& t);
nlohmann::json stroke_transform_to_json(const StrokeTransform& t);

}  // namespace protosnap
