#include <doctest.h>

#include <random>

#include "pnc/predictors.hpp"
#include "test_support.hpp"

using namespace pnc;
using namespace pnc::testing;

namespace {

GrayImage random_image(int w, int h, uint32_t seed) {
  GrayImage img(w, h);
  std::mt19937 rng(seed);
  for (auto& px : img.pixels) px = static_cast<uint8_t>(rng() & 0xFF);
  return img;
}

}  // namespace

TEST_CASE("gap: all neighbors equal predicts the constant") {
  for (uint8_t v : {0, 17, 128, 255}) {
    CausalNeighbors n{v, v, v, v, v, v, v};
    CHECK(gap_predict(n) == doctest::Approx(static_cast<double>(v)));
  }
}

TEST_CASE("gap: hand-evaluated mixed case gives 75") {
  // W=100, all other neighbors 50: dh = 50, dv = 50, no adjustment
  CausalNeighbors n;
  n.W = 100;
  n.N = n.NW = n.NE = n.WW = n.NN = n.NNE = 50;
  CHECK(gap_predict(n) == doctest::Approx(75.0));
}

TEST_CASE("gap: sharp edges return a single neighbor") {
  // dv - dh = |200-100| = 100 > 80 -> horizontal edge -> W
  CausalNeighbors horiz;
  horiz.W = 200;
  horiz.WW = 200;
  horiz.N = horiz.NW = horiz.NE = horiz.NN = horiz.NNE = 100;
  CHECK(gap_predict(horiz) == doctest::Approx(200.0));

  // mirrored: dh = 100, dv = 0 -> vertical edge -> N
  CausalNeighbors vert;
  vert.N = 200;
  vert.NW = vert.NE = 100;
  vert.W = vert.WW = 100;
  vert.NN = 200;
  vert.NNE = 100;
  // dh = |100-100| + |200-100| + |200-100| = 200; dv = |100-100| + 0 + 0 = 0
  CHECK(gap_predict(vert) == doctest::Approx(200.0));
}

TEST_CASE("gap: weak-edge ladder blends toward W") {
  // dv - dh in (8, 32]: p' = (3p + W) / 4
  CausalNeighbors n;
  n.W = 120;
  n.WW = 120;
  n.N = 100;
  n.NW = 100;
  n.NE = 100;
  n.NN = 80;
  n.NNE = 80;
  // dh = 0 + 0 + 0 = 0; dv = |120-100| + |100-80| + |100-80| = 60 -> (p+W)/2
  const double p = (120 + 100) / 2.0 + 0.0;
  CHECK(gap_predict(n) == doctest::Approx((p + 120) / 2.0));
}

TEST_CASE("gap: prediction stays within the documented envelope") {
  std::mt19937 rng(71);
  for (int trial = 0; trial < 2000; ++trial) {
    CausalNeighbors n;
    n.W = static_cast<uint8_t>(rng() & 0xFF);
    n.N = static_cast<uint8_t>(rng() & 0xFF);
    n.NW = static_cast<uint8_t>(rng() & 0xFF);
    n.NE = static_cast<uint8_t>(rng() & 0xFF);
    n.WW = static_cast<uint8_t>(rng() & 0xFF);
    n.NN = static_cast<uint8_t>(rng() & 0xFF);
    n.NNE = static_cast<uint8_t>(rng() & 0xFF);
    const double p = gap_predict(n);
    const double lo = std::min(n.W, n.N) - 64.0;
    const double hi = std::max(n.W, n.N) + 64.0;
    REQUIRE(p >= lo);
    REQUIRE(p <= hi);
  }
}

TEST_CASE("causal_sample: border substitution walks to the nearest causal pixel") {
  GrayImage img(4, 3);
  for (int64_t i = 0; i < img.num_pixels(); ++i)
    img.pixels[i] = static_cast<uint8_t>(i + 1);  // 1..12 row-major
  // first pixel: nothing causal
  CHECK(causal_sample(img, -1, 0, 0, 0) == 128);
  // row 0: everything above clamps onto the row, left of x
  CHECK(causal_sample(img, 2, -1, 2, 0) == img.at(1, 0));
  // column 0: left neighbors fall back to the row above
  CHECK(causal_sample(img, -1, 1, 0, 1) == img.at(0, 0));
  // interior: in-range positions are returned as-is
  CHECK(causal_sample(img, 1, 1, 2, 2) == img.at(1, 1));
  // current row right of x-1 clamps to x-1
  CHECK(causal_sample(img, 3, 2, 2, 2) == img.at(1, 2));
}

TEST_CASE("predict_image: constant image under GAP predicts the constant everywhere except the first pixel") {
  GrayImage img(16, 12, 99);
  PredictionMap map = predict_image(img, PredictorId::Gap);
  CHECK(map.at(0, 0) == doctest::Approx(128.0));
  for (int y = 0; y < img.height; ++y)
    for (int x = (y == 0 ? 1 : 0); x < img.width; ++x)
      REQUIRE(map.at(x, y) == doctest::Approx(99.0));
}

TEST_CASE("predict_image: left predictor copies the left neighbor, 128 at column 0") {
  GrayImage img = random_image(9, 5, 3);
  PredictionMap map = predict_image(img, PredictorId::Left);
  for (int y = 0; y < 5; ++y) {
    CHECK(map.at(0, y) == doctest::Approx(128.0));
    for (int x = 1; x < 9; ++x)
      REQUIRE(map.at(x, y) == doctest::Approx(static_cast<double>(img.at(x - 1, y))));
  }
}

TEST_CASE("predict_image: causality holds under perturbation for every predictor") {
  PredNetConfig cfg;
  cfg.context_size = 7;
  cfg.channels = 3;
  cfg.num_residual_units = 1;
  PredNetWeights w = init_weights(cfg, 17);
  PredictorResources res;
  res.l1 = &w;

  std::mt19937 rng(91);
  for (int trial = 0; trial < 25; ++trial) {
    GrayImage img = random_image(10, 8, 500 + trial);
    const int px = static_cast<int>(uniform_index(rng, 10));
    const int py = static_cast<int>(uniform_index(rng, 8));
    GrayImage mod = img;
    mod.at(px, py) ^= 0x77;

    for (PredictorId id : {PredictorId::Left, PredictorId::Gap, PredictorId::PredNet}) {
      PredictionMap a = predict_image(img, id, res);
      PredictionMap b = predict_image(mod, id, res);
      for (int y = 0; y <= py; ++y)
        for (int x = 0; x < (y == py ? px + 1 : img.width); ++x)
          REQUIRE(a.at(x, y) == b.at(x, y));
    }
  }
}

TEST_CASE("predict_image: prednet-r wires the three nets through the refine mlp") {
  PredNetConfig cfg;
  cfg.context_size = 5;
  cfg.channels = 2;
  cfg.num_residual_units = 1;
  PredNetWeights w1 = init_weights(cfg, 1);
  PredNetWeights w2 = init_weights(cfg, 2);
  PredNetWeights w8 = init_weights(cfg, 3);
  RefineNetWeights rf = identity_refine_weights();
  PredictorResources res;
  res.l1 = &w1;
  res.l2 = &w2;
  res.linf = &w8;
  res.refine = &rf;

  GrayImage img = random_image(8, 8, 5);
  PredictionMap fused = predict_image(img, PredictorId::PredNetR, res);
  PredictionMap first = predict_image(img, PredictorId::PredNet, res);
  // identity refine weights pass the l1 prediction through
  for (int64_t i = 0; i < img.num_pixels(); ++i)
    REQUIRE(fused.values[i] == doctest::Approx(first.values[i]).epsilon(1e-5));
}

TEST_CASE("predict_image: missing weights are rejected") {
  GrayImage img(8, 8, 1);
  CHECK_THROWS_AS(predict_image(img, PredictorId::PredNet), std::invalid_argument);
  CHECK_THROWS_AS(predict_image(img, PredictorId::PredNetR), std::invalid_argument);
}
