#include "support.hpp"

#include <functional>

#include "protosnap/eval.hpp"

using namespace protosnap;
using testing::check_error;

namespace {

/// Maximum bipartite matching by exhaustive augmenting paths.
int optimal_matches(const std::vector<Point>& pred, const std::vector<Point>& gt, double threshold) {
  std::vector<int> owner(gt.size(), -1);
  std::function<bool(int, std::vector<char>&)> augment = [&](int p, std::vector<char>& seen) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (seen[g] || distance(pred[p], gt[g]) > threshold) continue;
      seen[g] = 1;
      if (owner[g] < 0 || augment(owner[g], seen)) {
        owner[g] = p;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    std::vector<char> seen(gt.size(), 0);
    matched += augment(static_cast<int>(p), seen);
  }
  return matched;
}

/// Keypoints on a lattice with 100 px spacing.
std::vector<Point> lattice(int n) {
  std::vector<Point> out;
  for (int i = 0; i < n; ++i) out.push_back({50.0 + 100.0 * (i % 5), 50.0 + 100.0 * (i / 5)});
  return out;
}

Annotation annotation(const std::string& sign, std::vector<Point> pts) {
  Annotation a;
  a.sign_name = sign;
  a.keypoints = std::move(pts);
  a.image_width = 512;
  a.image_height = 512;
  return a;
}

}  // namespace

TEST_CASE("match_keypoints basics") {
  const auto gt = lattice(12);
  const MatchCounts same = match_keypoints(gt, gt, 1.0);
  CHECK(same.tp == 12);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);

  const MatchCounts none = match_keypoints({}, gt, 20.0);
  CHECK(none.tp == 0);
  CHECK(none.fn == 12);

  // Two predictions near one GT point: one-to-one.
  const MatchCounts two = match_keypoints({{10, 10}, {12, 10}}, {{11, 11}}, 5.0);
  CHECK(two.tp == 1);
  CHECK(two.fp == 1);
  CHECK(two.fn == 0);
  CHECK(two.tp == optimal_matches({{10, 10}, {12, 10}}, {{11, 11}}, 5.0));

  // Distance exactly at the threshold counts.
  CHECK(match_keypoints({{0, 0}}, {{3, 4}}, 5.0).tp == 1);
}

TEST_CASE("greedy equals optimal when candidates are unique") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 6.0);
  for (int t = 0; t < 200; ++t) {
    const auto gt = lattice(20);
    std::vector<Point> pred;
    for (const auto& p : gt) {
      if (rng() % 4 == 0) continue;
      pred.push_back({p.x + n(rng), p.y + n(rng)});
    }
    const MatchCounts m = match_keypoints(pred, gt, 20.0);
    CHECK(m.tp == optimal_matches(pred, gt, 20.0));
    CHECK(m.tp + m.fp == static_cast<int>(pred.size()));
    CHECK(m.tp + m.fn == static_cast<int>(gt.size()));
  }
}

TEST_CASE("swapping roles swaps fp and fn") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 200);
  for (int t = 0; t < 200; ++t) {
    std::vector<Point> a(rng() % 12), b(rng() % 12);
    for (auto& p : a) p = {u(rng), u(rng)};
    for (auto& p : b) p = {u(rng), u(rng)};
    const MatchCounts ab = match_keypoints(a, b, 30.0);
    const MatchCounts ba = match_keypoints(b, a, 30.0);
    CHECK(ab.tp == ba.tp);
    CHECK(ab.fp == ba.fn);
    CHECK(ab.fn == ba.fp);
  }
}

TEST_CASE("precision, recall and F1") {
  const Prf zero = prf_from_counts({});
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  const Prf p = prf_from_counts({3, 1, 2});
  CHECK(p.precision == doctest::Approx(0.75));
  CHECK(p.recall == doctest::Approx(0.6));
  CHECK(p.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
}

TEST_CASE("corpus metrics") {
  std::map<std::string, Annotation> gt, same, shifted;
  for (int i = 0; i < 4; ++i) {
    const auto pts = lattice(8 + i);
    const std::string key = "img" + std::to_string(i);
    const std::string sign = i % 2 ? "KA" : "DISH";
    gt[key] = annotation(sign, pts);
    same[key] = annotation(sign, pts);
    std::vector<Point> moved;
    for (const auto& p : pts) moved.push_back({p.x + 35.0, p.y});
    shifted[key] = annotation(sign, moved);
  }

  const MetricReport ok = evaluate_corpus(same, gt);
  CHECK(ok.images == 4);
  for (const auto& r : ok.overall) CHECK(r.f1 == 1.0);
  CHECK(ok.per_sign.size() == 2);

  const MetricReport off = evaluate_corpus(shifted, gt);
  CHECK(off.overall[0].f1 == 0.0);
  CHECK(off.overall[1].f1 == 0.0);
  CHECK(off.overall[2].f1 == 1.0);

  // Micro averaging: counts add across images.
  std::map<std::string, Annotation> mixed = same;
  mixed["img0"] = shifted["img0"];
  const MetricReport mix = evaluate_corpus(mixed, gt, {20.0});
  CHECK(mix.overall[0].counts.tp == 9 + 10 + 11);
  CHECK(mix.overall[0].counts.fp == 8);
  CHECK(mix.per_sign.at("DISH")[0].counts.tp == 10);

  const std::string table = report_to_table(ok);
  CHECK(table.find("F1@20") != std::string::npos);
  const auto j = report_to_json(off);
  CHECK(j["overall"].size() == 3);
}

TEST_CASE("F1 never drops as the threshold grows") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 25.0);
  for (int t = 0; t < 50; ++t) {
    std::map<std::string, Annotation> gt, pred;
    for (int i = 0; i < 3; ++i) {
      const auto pts = lattice(10);
      std::vector<Point> noisy;
      for (const auto& p : pts) noisy.push_back({p.x + n(rng), p.y + n(rng)});
      gt["k" + std::to_string(i)] = annotation("X", pts);
      pred["k" + std::to_string(i)] = annotation("X", noisy);
    }
    std::vector<double> thresholds;
    for (double th = 0.0; th <= 120.0; th += 5.0) thresholds.push_back(th);
    const MetricReport r = evaluate_corpus(pred, gt, thresholds);
    for (std::size_t i = 1; i < r.overall.size(); ++i) CHECK(r.overall[i].f1 >= r.overall[i - 1].f1);
  }
}

TEST_CASE("key and sign mismatches") {
  std::map<std::string, Annotation> gt{{"a", annotation("KA", lattice(4))}};
  std::map<std::string, Annotation> missing;
  check_error([&] { evaluate_corpus(missing, gt); }, ErrorCode::KeyMismatch);
  std::map<std::string, Annotation> extra = gt;
  extra["b"] = annotation("KA", lattice(4));
  check_error([&] { evaluate_corpus(extra, gt); }, ErrorCode::KeyMismatch);
  std::map<std::string, Annotation> other{{"a", annotation("DISH", lattice(4))}};
  check_error([&] { evaluate_corpus(other, gt); }, ErrorCode::KeyMismatch);
}

TEST_CASE("annotation files") {
  testing::TempDir dir("eval");
  const Skeleton ka = testing::load_prototype("KA");
  const Annotation a = Annotation::from_skeleton(ka, 640, 480);
  CHECK(a.keypoints == ka.keypoints());
  save_annotation(a, dir / "a.json");
  const Annotation b = load_annotation(dir / "a.json");
  CHECK(b.keypoints == a.keypoints);
  CHECK(b.image_width == 640);
  CHECK(b.image_height == 480);
  CHECK(b.sign_name == "KA");
  // A bare skeleton file also loads.
  const Annotation c = load_annotation(testing::prototype_path("KA", ".json"));
  CHECK(c.keypoints == ka.keypoints());
}
