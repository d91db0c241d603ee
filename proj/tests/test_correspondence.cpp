#include "support.hpp"

#include <set>
#include <tuple>

#include "protosnap/correspondence.hpp"

using namespace protosnap;

namespace {

SimilarityVolume transpose(const SimilarityVolume& v) {
  const int np = v.proto_grid().cells(), nt = v.target_grid().cells();
  std::vector<float> t(v.values().size());
  for (int p = 0; p < np; ++p) {
    for (int q = 0; q < nt; ++q) t[static_cast<std::size_t>(q) * np + p] = v.values()[static_cast<std::size_t>(p) * nt + q];
  }
  return SimilarityVolume(v.target_grid(), v.proto_grid(), std::move(t));
}

}  // namespace

TEST_CASE("best buddies match the brute-force oracle") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const SimilarityVolume v = similarity_volume(testing::random_feature_map(rng, 12, 8, 8),
                                                 testing::random_feature_map(rng, 12, 8, 8));
    const auto corrs = best_buddies(v);
    CHECK(testing::as_cells(corrs, v) == testing::brute_force_buddies(v));
    CHECK(corrs.size() == testing::brute_force_buddies(v).size());
  }
}

TEST_CASE("best buddies with heavy ties") {
  // Coarsely quantized values make ties common, exercising the tie rule.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> level(0, 3);
  const GridGeometry g{4, 4, 32, 32};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> values(256);
    for (float& x : values) x = 0.25f * static_cast<float>(level(rng));
    const SimilarityVolume v(g, g, values);
    CHECK(testing::as_cells(best_buddies(v), v) == testing::brute_force_buddies(v));
  }
}

TEST_CASE("hand-built 2x2 volume with one mutual pair") {
  const GridGeometry g{2, 2, 16, 16};
  // rows: prototype cells, columns: target cells
  const std::vector<float> s{
      0.1f, 0.9f, 0.2f, 0.3f,   //
      0.0f, 0.8f, 0.1f, 0.2f,   //
      0.2f, 0.95f, 0.1f, 0.0f,  //
      0.3f, 0.7f, 0.6f, 0.5f,   //
  };
  const SimilarityVolume v(g, g, s);
  const auto corrs = best_buddies(v);
  REQUIRE(corrs.size() == 1);
  CHECK(corrs[0].proto == Point{4, 12});
  CHECK(corrs[0].target == Point{12, 4});
  CHECK(corrs[0].score == 0.95f);
}

TEST_CASE("identical maps pair every cell with itself") {
  std::mt19937_64 rng(8);
  const FeatureMap m = testing::random_feature_map(rng, 24, 8, 8);
  const auto corrs = best_buddies(similarity_volume(m, m));
  REQUIRE(corrs.size() == 64);
  for (const auto& c : corrs) CHECK(c.proto == c.target);
}

TEST_CASE("constant volume yields a single tie-broken pair") {
  const GridGeometry g{4, 4, 32, 32};
  const SimilarityVolume v(g, g, std::vector<float>(256, 0.5f));
  const auto corrs = best_buddies(v);
  REQUIRE(corrs.size() == 1);
  CHECK(corrs[0].proto == Point{4, 4});
  CHECK(corrs[0].target == Point{4, 4});
}

TEST_CASE("transposed volume swaps roles") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const SimilarityVolume v = similarity_volume(testing::random_feature_map(rng, 6, 8, 8),
                                                 testing::random_feature_map(rng, 6, 8, 8));
    std::set<std::tuple<double, double, double, double>> a, b;
    for (const auto& c : best_buddies(v)) a.insert({c.proto.x, c.proto.y, c.target.x, c.target.y});
    for (const auto& c : best_buddies(transpose(v))) b.insert({c.target.x, c.target.y, c.proto.x, c.proto.y});
    CHECK(a == b);
  }
}

TEST_CASE("each cell appears at most once") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const SimilarityVolume v = similarity_volume(testing::random_feature_map(rng, 3, 8, 8),
                                                 testing::random_feature_map(rng, 3, 8, 8));
    std::set<std::pair<double, double>> protos, targets;
    const auto corrs = best_buddies(v);
    for (const auto& c : corrs) {
      protos.insert({c.proto.x, c.proto.y});
      targets.insert({c.target.x, c.target.y});
    }
    CHECK(protos.size() == corrs.size());
    CHECK(targets.size() == corrs.size());
  }
}

TEST_CASE("foreground filter") {
  GrayImage img(64, 64, 255.0f);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 32; ++c) img.at(r, c) = 0.0f;
  }
  std::vector<Correspondence> corrs;
  int black = 0;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const Point p{c * 8.0 + 4.0, r * 8.0 + 4.0};
      corrs.push_back({p, p, 1.0f});
      black += p.x < 32.0;
    }
  }
  const auto kept = filter_foreground(corrs, img);
  CHECK(static_cast<int>(kept.size()) == black);
  for (const auto& c : kept) CHECK(c.proto.x < 32.0);

  CHECK(filter_foreground(corrs, img, 256.0) == corrs);
  CHECK(filter_foreground(corrs, GrayImage(64, 64, 255.0f)).empty());
}

TEST_CASE("correspondence JSON") {
  const std::vector<Correspondence> corrs{{{4, 4}, {12, 20}, 0.5f}};
  const auto j = correspondences_to_json(corrs);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["proto"][0] == 4.0);
  CHECK(j[0]["target"][1] == 20.0);
  CHECK(j[0]["score"].get<double>() == doctest::Approx(0.5));
}
