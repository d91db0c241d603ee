#include "protosnap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>

#include "protosnap/error.hpp"

namespace protosnap {

Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point Stroke::head_centroid() const {
  return {(head_a.x + head_b.x + head_c.x) / 3.0, (head_a.y + head_b.y + head_c.y) / 3.0};
}

Point Stroke::keypoint(int index) const {
  switch (index) {
    case kHeadA: return head_a;
    case kHeadB: return head_b;
    case kHeadC: return head_c;
    case kTail: return tail;
    case kHeadCentroid: return head_centroid();
    default: throw Error(ErrorCode::InvalidArgument, "keypoint index out of range");
  }
}

std::vector<Point> Skeleton::keypoints() const {
  std::vector<Point> out;
  out.reserve(strokes.size() * kKeypointsPerStroke);
  for (const auto& s : strokes) {
    out.insert(out.end(), {s.head_a, s.head_b, s.head_c, s.tail});
  }
  return out;
}

Point Skeleton::edge_start(const Edge& e) const { return strokes.at(e.stroke_a).keypoint(e.keypoint_a); }
Point Skeleton::edge_end(const Edge& e) const { return strokes.at(e.stroke_b).keypoint(e.keypoint_b); }

std::vector<Edge> default_edges(std::size_t stroke_count) {
  std::vector<Edge> edges;
  edges.reserve(stroke_count * 4);
  for (int s = 0; s < static_cast<int>(stroke_count); ++s) {
    edges.push_back({s, kHeadA, s, kHeadB});
    edges.push_back({s, kHeadB, s, kHeadC});
    edges.push_back({s, kHeadC, s, kHeadA});
    edges.push_back({s, kHeadCentroid, s, kTail});
  }
  return edges;
}

namespace {

bool finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double triangle_area2(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

}  // namespace

void validate(const Skeleton& skeleton) {
  const int n = static_cast<int>(skeleton.strokes.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "skeleton has no strokes");
  for (int i = 0; i < n; ++i) {
    const auto& s = skeleton.strokes[i];
    for (int k = 0; k < kKeypointsPerStroke; ++k) {
      if (!finite(s.keypoint(k))) {
        throw Error(ErrorCode::InvalidArgument, "non-finite keypoint in stroke " + std::to_string(i));
      }
    }
    if (std::abs(triangle_area2(s.head_a, s.head_b, s.head_c)) < 1e-9) {
      throw Error(ErrorCode::InvalidArgument, "collinear head in stroke " + std::to_string(i));
    }
  }
  std::vector<bool> touched(n, false);
  for (const auto& e : skeleton.edges) {
    const bool ok = e.stroke_a >= 0 && e.stroke_a < n && e.stroke_b >= 0 && e.stroke_b < n &&
                    e.keypoint_a >= 0 && e.keypoint_a <= kHeadCentroid && e.keypoint_b >= 0 &&
                    e.keypoint_b <= kHeadCentroid;
    if (!ok) throw Error(ErrorCode::InvalidArgument, "edge index out of range");
    touched[e.stroke_a] = true;
    touched[e.stroke_b] = true;
  }
  for (int i = 0; i < n; ++i) {
    if (!touched[i]) {
      throw Error(ErrorCode::InvalidArgument, "stroke " + std::to_string(i) + " has no edge");
    }
  }
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * b[k * 3 + c];
      out[r * 3 + c] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AffineTransform

AffineTransform::AffineTransform() : params_{1.0, 0.0, 0.0, 0.0, 1.0, 0.0} {}

AffineTransform::AffineTransform(const std::array<double, 6>& params) : params_(params) {
  for (double v : params_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite affine entry");
  }
  if (std::abs(determinant()) < kMinDeterminant) {
    throw Error(ErrorCode::InvalidArgument, "affine transform is not invertible");
  }
}

AffineTransform AffineTransform::translation(double tx, double ty) {
  return AffineTransform({1.0, 0.0, tx, 0.0, 1.0, ty});
}

AffineTransform AffineTransform::similarity_about(Point center, double degrees, double scale,
                                                  double tx, double ty) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = scale * std::cos(rad);
  const double s = scale * std::sin(rad);
  // x' = R(x - center) + center + t
  return AffineTransform({c, -s, center.x - c * center.x + s * center.y + tx,  //
                          s, c, center.y - s * center.x - c * center.y + ty});
}

double AffineTransform::operator()(int row, int col) const {
  if (row == 2) return col == 2 ? 1.0 : 0.0;
  return params_[row * 3 + col];
}

double AffineTransform::determinant() const { return params_[0] * params_[4] - params_[1] * params_[3]; }

Mat3 AffineTransform::matrix() const {
  return {params_[0], params_[1], params_[2], params_[3], params_[4], params_[5], 0.0, 0.0, 1.0};
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  const double a = params_[4] / det;
  const double b = -params_[1] / det;
  const double c = -params_[3] / det;
  const double d = params_[0] / det;
  return AffineTransform({a, b, -(a * params_[2] + b * params_[5]),  //
                          c, d, -(c * params_[2] + d * params_[5])});
}

AffineTransform AffineTransform::compose(const AffineTransform& other) const {
  const Mat3 m = multiply(matrix(), other.matrix());
  return AffineTransform({m[0], m[1], m[2], m[3], m[4], m[5]});
}

// ---------------------------------------------------------------------------
// StrokeTransform

Mat3 StrokeTransform::matrix() const {
  return {1.0 + p[0], p[1], p[2], p[3], 1.0 + p[4], p[5], p[6], p[7], 1.0};
}

bool StrokeTransform::is_identity() const {
  return std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; });
}

Point apply_affine(const AffineTransform& t, Point p) {
  const auto& g = t.params();
  return {g[0] * p.x + g[1] * p.y + g[2], g[3] * p.x + g[4] * p.y + g[5]};
}

Point apply_projective(const StrokeTransform& local, const AffineTransform& global, Point pt) {
  const Point u = apply_affine(global, pt);
  const auto& p = local.p;
  const double x = (1.0 + p[0]) * u.x + p[1] * u.y + p[2];
  const double y = p[3] * u.x + (1.0 + p[4]) * u.y + p[5];
  const double z = p[6] * u.x + p[7] * u.y + 1.0;
  if (std::abs(z) < 1e-9) {
    throw Error(ErrorCode::DegenerateProjection, "homogeneous coordinate vanished");
  }
  return {x / z, y / z};
}

AffineTransform fit_affine_least_squares(std::span<const Point> src, std::span<const Point> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::InvalidArgument, "source and destination sizes differ");
  }
  const auto n = static_cast<Eigen::Index>(src.size());
  if (n < 3) throw Error(ErrorCode::RankDeficient, "need at least three correspondences");

  // Center and scale the source points for conditioning.
  double mx = 0.0, my = 0.0;
  for (const auto& p : src) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& p : src) spread += std::hypot(p.x - mx, p.y - my);
  spread /= static_cast<double>(n);
  if (spread < 1e-12) throw Error(ErrorCode::RankDeficient, "source points coincide");

  Eigen::MatrixXd a(n, 3);
  Eigen::MatrixXd b(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = (src[i].x - mx) / spread;
    a(i, 1) = (src[i].y - my) / spread;
    a(i, 2) = 1.0;
    b(i, 0) = dst[i].x;
    b(i, 1) = dst[i].y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw Error(ErrorCode::RankDeficient, "source points are collinear");
  const Eigen::MatrixXd x = qr.solve(b);

  // Undo the normalization: dst = A (src - m)/s + c.
  const double g11 = x(0, 0) / spread, g12 = x(1, 0) / spread;
  const double g21 = x(0, 1) / spread, g22 = x(1, 1) / spread;
  const double g13 = x(2, 0) - g11 * mx - g12 * my;
  const double g23 = x(2, 1) - g21 * mx - g22 * my;
  try {
    return AffineTransform({g11, g12, g13, g21, g22, g23});
  } catch (const Error&) {
    throw Error(ErrorCode::RankDeficient, "fitted transform is singular");
  }
}

Skeleton transform_skeleton(const Skeleton& skeleton, const AffineTransform& global,
                            std::span<const StrokeTransform> locals) {
  if (!locals.empty() && locals.size() != skeleton.strokes.size()) {
    throw Error(ErrorCode::InvalidArgument, "one local transform per stroke required");
  }
  Skeleton out = skeleton;
  for (std::size_t i = 0; i < out.strokes.size(); ++i) {
    auto map = [&](Point p) {
      return locals.empty() ? apply_affine(global, p) : apply_projective(locals[i], global, p);
    };
    auto& s = out.strokes[i];
    s.head_a = map(s.head_a);
    s.head_b = map(s.head_b);
    s.head_c = map(s.head_c);
    s.tail = map(s.tail);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Point point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::Parse, "point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json point_to_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

}  // namespace

Skeleton skeleton_from_json(const nlohmann::json& j) {
  Skeleton s;
  try {
    s.sign_name = j.at("sign").get<std::string>();
    for (const auto& js : j.at("strokes")) {
      const auto& head = js.at("head");
      if (!head.is_array() || head.size() != 3) {
        throw Error(ErrorCode::Parse, "stroke head must have three points");
      }
      s.strokes.push_back({point_from_json(head[0]), point_from_json(head[1]),
                           point_from_json(head[2]), point_from_json(js.at("tail"))});
    }
    if (j.contains("edges")) {
      for (const auto& je : j.at("edges")) {
        if (!je.is_array() || je.size() != 4) throw Error(ErrorCode::Parse, "edge must have 4 indices");
        s.edges.push_back({je[0].get<int>(), je[1].get<int>(), je[2].get<int>(), je[3].get<int>()});
      }
    } else {
      s.edges = default_edges(s.strokes.size());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, e.what());
  }
  validate(s);
  return s;
}

nlohmann::json skeleton_to_json(const Skeleton& skeleton) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : skeleton.strokes) {
    strokes.push_back({{"head", {point_to_json(s.head_a), point_to_json(s.head_b), point_to_json(s.head_c)}},
                       {"tail", point_to_json(s.tail)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : skeleton.edges) {
    edges.push_back({e.stroke_a, e.keypoint_a, e.stroke_b, e.keypoint_b});
  }
  return {{"sign", skeleton.sign_name}, {"strokes", strokes}, {"edges", edges}};
}

Skeleton load_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open skeleton file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return skeleton_from_json(j);
}

void save_skeleton(const Skeleton& skeleton, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << skeleton_to_json(skeleton).dump(2) << '\n';
}

nlohmann::json affine_to_json(const AffineTransform& t) { return t.params(); }

nlohmann::json stroke_transform_to_json(const StrokeTransform& t) { return t.p; }

}  // namespace protosnap
