#include <doctest.h>

#include <cmath>

#include "bgml/grain.hpp"

using namespace bgml;

namespace {

AttentionParams flat_attention(int f_dim, double v = 0.0) {
  AttentionParams attn;
  attn.w_self.assign(f_dim, v);
  attn.w_neigh.assign(f_dim, v);
  attn.bias = 0.0;
  return attn;
}

GrainSource lone_neighbor_source() {
  // F'=2, C=1, X_i=[1,2], single neighbor X_j=[3,0].
  GrainSource s;
  s.node = 0;
  s.label = 0;
  s.self_features = Mat(2, 1);
  s.self_features(0, 0) = 1.0;
  s.self_features(1, 0) = 2.0;
  s.neighbor_ids = {1};
  Mat y(2, 1);
  y(0, 0) = 3.0;
  y(1, 0) = 0.0;
  s.neighbor_features.push_back(y);
  return s;
}

}  // namespace

TEST_CASE("sgnroot definition and oddness") {
  CHECK(sgnroot(0.0) == 0.0);
  CHECK(sgnroot(4.0) == doctest::Approx(2.0));
  CHECK(sgnroot(-9.0) == doctest::Approx(-3.0));
  Rng rng(31);
  for (int i = 0; i < 1000000; ++i) {
    double x = (rng.next_double() - 0.5) * 200.0;
    CHECK(sgnroot(-x) == -sgnroot(x));
  }
}

TEST_CASE("single neighbor gets attention weight one") {
  auto src = lone_neighbor_source();
  GrainCache cache;
  build_grain(src, flat_attention(2, 0.3), &cache);
  REQUIRE(cache.omega[0].size() == 1);
  CHECK(cache.omega[0][0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("feature adjacency matches the outer-product oracle") {
  auto src = lone_neighbor_source();
  FeatureGrain grain = build_grain(src, flat_attention(2));
  // omega = 1, n = 1: A = sgnroot([[3,0],[6,0]]).
  CHECK(grain.feat_adj[0](0, 0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(grain.feat_adj[0](0, 1) == doctest::Approx(0.0));
  CHECK(grain.feat_adj[0](1, 0) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));
  CHECK(grain.feat_adj[0](1, 1) == doctest::Approx(0.0));

  // Normalization: D = 1 + row abs-sum of A; adj = D^-1/2 (A + I) D^-1/2.
  double d0 = 1.0 + std::sqrt(3.0);
  double d1 = 1.0 + std::sqrt(6.0);
  CHECK(grain.norm_adj[0](0, 0) == doctest::Approx((std::sqrt(3.0) + 1.0) / d0).epsilon(1e-14));
  CHECK(grain.norm_adj[0](0, 1) == doctest::Approx(0.0));
  CHECK(grain.norm_adj[0](1, 0) ==
        doctest::Approx(std::sqrt(6.0) / std::sqrt(d0 * d1)).epsilon(1e-14));
  CHECK(grain.norm_adj[0](1, 1) == doctest::Approx(1.0 / d1).epsilon(1e-14));
}

TEST_CASE("attention weights sum to one per channel") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    int f_dim = 2 + static_cast<int>(rng.below(6));
    int channels = 1 + static_cast<int>(rng.below(3));
    int n = 1 + static_cast<int>(rng.below(5));
    GrainSource src;
    src.node = trial;
    src.label = 0;
    src.self_features = Mat(f_dim, channels);
    for (double& v : src.self_features.a) v = rng.gaussian();
    for (int j = 0; j < n; ++j) {
      src.neighbor_ids.push_back(100 + j);
      Mat y(f_dim, channels);
      for (double& v : y.a) v = rng.gaussian();
      src.neighbor_features.push_back(std::move(y));
    }
    AttentionParams attn;
    attn.w_self.resize(f_dim);
    attn.w_neigh.resize(f_dim);
    for (double& v : attn.w_self) v = rng.gaussian();
    for (double& v : attn.w_neigh) v = rng.gaussian();
    attn.bias = rng.gaussian();

    GrainCache cache;
    build_grain(src, attn, &cache);
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (double w : cache.omega[c]) sum += w;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("isolated node falls back to itself as sole neighbor") {
  GrainSource src;
  src.node = 5;
  src.label = 1;
  src.self_features = Mat(2, 1);
  src.self_features(0, 0) = 2.0;
  src.self_features(1, 0) = -1.0;

  GrainCache cache;
  FeatureGrain grain = build_grain(src, flat_attention(2, 0.1), &cache);
  CHECK(cache.self_fallback);
  CHECK(cache.n_eff == 1);
  CHECK(cache.omega[0][0] == doctest::Approx(1.0));
  // A = sgnroot(x x^T) for x = [2, -1].
  CHECK(grain.feat_adj[0](0, 0) == doctest::Approx(2.0));
  CHECK(grain.feat_adj[0](0, 1) == doctest::Approx(-std::sqrt(2.0)));
  CHECK(grain.feat_adj[0](1, 1) == doctest::Approx(1.0));
}

TEST_CASE("grain source serialization is self-contained") {
  auto src = lone_neighbor_source();
  std::string text = src.to_json();
  GrainSource back = GrainSource::from_json(text);
  CHECK(back.node == src.node);
  CHECK(back.label == src.label);
  CHECK(back.self_features == src.self_features);
  CHECK(back.neighbor_ids == src.neighbor_ids);
  CHECK(back.neighbor_features.size() == 1);
  CHECK(back.neighbor_features[0] == src.neighbor_features[0]);

  // The source graph is long gone; the grain still builds identically.
  FeatureGrain grain = build_grain(back, flat_attention(2));
  CHECK(grain.feat_adj[0](1, 0) == doctest::Approx(std::sqrt(6.0)));
}

TEST_CASE("feature reducer keeps the top-variance indices") {
  GraphStore g(4, 1);
  // Feature 0 constant, feature 1 high variance, 2 mild, 3 equal to 2's
  // variance (tie resolved toward the lower index).
  double rows[4][4] = {{1.0, 10.0, 1.0, 2.0},
                       {1.0, -10.0, 2.0, 3.0},
                       {1.0, 10.0, 3.0, 4.0},
                       {1.0, -10.0, 4.0, 5.0}};
  for (NodeId v = 0; v < 4; ++v) {
    Mat x(4, 1);
    for (int f = 0; f < 4; ++f) x(f, 0) = rows[v][f];
    g.add_node(v, x, 0);
  }
  auto red = fit_reducer(g, g.node_ids(), 2);
  CHECK(red.selected == std::vector<int>{1, 2});

  auto identity = fit_reducer(g, g.node_ids(), 64);
  CHECK(identity.selected == std::vector<int>{0, 1, 2, 3});

  Mat reduced = red.reduce(g.node(0).features);
  CHECK(reduced.rows == 2);
  CHECK(reduced(0, 0) == doctest::Approx(10.0));
  CHECK(reduced(1, 0) == doctest::Approx(1.0));
}
