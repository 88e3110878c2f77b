#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "pnc/model.hpp"
#include "test_support.hpp"

using namespace pnc;
using namespace pnc::testing;

namespace {

PredNetConfig tiny_config() {
  PredNetConfig cfg;
  cfg.context_size = 7;
  cfg.channels = 4;
  cfg.num_residual_units = 2;
  return cfg;
}

GrayImage random_image(int w, int h, uint32_t seed) {
  GrayImage img(w, h);
  std::mt19937 rng(seed);
  for (auto& px : img.pixels) px = static_cast<uint8_t>(rng() & 0xFF);
  return img;
}

}  // namespace

// ---------------------------------------------------------------------------
// causal context

TEST_CASE("extract_context: exactly the raster-prior half can be nonzero") {
  PredNetConfig cfg;
  cfg.context_size = 21;
  GrayImage img(64, 64, 255);  // all white so causal entries are nonzero
  CausalContext ctx = extract_context(img, 32, 32, cfg);
  int nonzero = 0;
  for (float v : ctx.window.values()) nonzero += v != 0.0f;
  CHECK(nonzero == 220);  // 10 * 21 + 10
}

TEST_CASE("extract_context: top-left pixel sees only masked fill") {
  PredNetConfig cfg;
  cfg.context_size = 7;
  GrayImage img(16, 16, 200);
  CausalContext ctx = extract_context(img, 0, 0, cfg);
  // all causal positions fall outside the image -> fill, all others -> 0
  const int cs = cfg.context_size, half = cs / 2;
  for (int wy = 0; wy < cs; ++wy)
    for (int wx = 0; wx < cs; ++wx) {
      const float v = ctx.window.at4(0, 0, wy, wx);
      if (wy < half || (wy == half && wx < half))
        CHECK(v == kContextFill);
      else
        CHECK(v == 0.0f);
    }
}

TEST_CASE("extract_context: constant image fills causal entries with v/255") {
  PredNetConfig cfg;
  cfg.context_size = 5;
  GrayImage img(32, 32, 128);
  CausalContext ctx = extract_context(img, 16, 16, cfg);
  const float expect = 128.0f / 255.0f;
  int count = 0;
  for (float v : ctx.window.values())
    if (v != 0.0f) {
      CHECK(v == doctest::Approx(expect));
      ++count;
    }
  CHECK(count == 2 * 5 + 2);
}

TEST_CASE("extract_context: out-of-bounds center is rejected") {
  GrayImage img(4, 4);
  CHECK_THROWS_AS(extract_context(img, 4, 0, tiny_config()), std::invalid_argument);
  CHECK_THROWS_AS(extract_context(img, 0, -1, tiny_config()), std::invalid_argument);
}

TEST_CASE("causality: raster-later pixels never change a context") {
  PredNetConfig cfg = tiny_config();
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    GrayImage img = random_image(12, 9, 1000 + trial);
    const int x = static_cast<int>(uniform_index(rng, 12));
    const int y = static_cast<int>(uniform_index(rng, 9));
    CausalContext before = extract_context(img, x, y, cfg);

    // perturb a random pixel at or after (x,y) in raster order
    const int64_t start = static_cast<int64_t>(y) * 12 + x;
    const int64_t pos =
        start + uniform_index(rng, static_cast<uint32_t>(img.num_pixels() - start));
    img.pixels[pos] ^= 0x5A;
    CausalContext after = extract_context(img, x, y, cfg);
    REQUIRE(before.window.values() == after.window.values());
  }
}

// ---------------------------------------------------------------------------
// forward

TEST_CASE("forward: all-zero weights predict zero") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 1);
  for (Tensor* t : w.parameters())
    for (auto& v : t->values()) v = 0.0f;
  GrayImage img = random_image(16, 16, 2);
  Tensor batch = make_context_batch(img, {{5, 5}, {9, 3}}, cfg);
  Tensor pred = prednet_forward_eval(w, batch);
  CHECK(pred[0] == 0.0f);
  CHECK(pred[1] == 0.0f);
}

TEST_CASE("forward: identical contexts give identical predictions") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 3);
  GrayImage img(20, 20, 77);
  // interior pixels of a constant image share the same causal window
  Tensor batch = make_context_batch(img, {{10, 10}, {12, 11}}, cfg);
  Tensor pred = prednet_forward_eval(w, batch);
  CHECK(pred[0] == pred[1]);
}

TEST_CASE("forward: batched equals per-sample (eval mode)") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 4);
  GrayImage img = random_image(24, 24, 9);
  std::vector<std::pair<int, int>> centers{{3, 7}, {0, 0}, {23, 23}, {11, 2}};
  Tensor batch = make_context_batch(img, centers, cfg);
  Tensor batched = prednet_forward_eval(w, batch);
  for (size_t i = 0; i < centers.size(); ++i) {
    Tensor single = make_context_batch(img, {centers[i]}, cfg);
    Tensor pred = prednet_forward_eval(w, single);
    CHECK(pred[0] == doctest::Approx(batched[static_cast<int64_t>(i)]).epsilon(1e-5));
  }
}

TEST_CASE("forward: wrong context size is rejected") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 5);
  Tensor bad({1, 1, 9, 9});
  CHECK_THROWS_AS(prednet_forward_eval(w, bad), std::invalid_argument);
}

TEST_CASE("forward: full-net gradients match finite differences") {
  PredNetConfig cfg;
  cfg.context_size = 5;
  cfg.channels = 3;
  cfg.num_residual_units = 1;
  PredNetWeights w = init_weights(cfg, 6);
  std::mt19937 rng(6);
  Tensor contexts({2, 1, 5, 5});
  fill_uniform(contexts, rng, 0.0f, 1.0f);
  const auto proj = random_projection(2, rng);

  auto run = [&](PredNetWeights& net) {
    PredNetWeights copy = net;  // keep running stats fixed per evaluation
    return project(prednet_forward(copy, contexts, BnMode::Train), proj);
  };
  PredNetWeights scratch = w;
  PredNetTape tape;
  prednet_forward(scratch, contexts, BnMode::Train, &tape);
  PredNetGrads grads = prednet_backward(w, tape, Tensor({2, 1}, proj));

  auto params = w.parameters();
  auto names = w.parameter_names();
  auto f = [&]() { return run(w); };
  for (size_t i = 0; i < params.size(); ++i) {
    CAPTURE(names[i]);
    // looser than the per-op bound: the difference signal crosses seven
    // float32 layer stores before it reaches the loss
    CHECK(max_rel_error(grads.tensors[i].values(), fd_gradient(*params[i], f)) < 5e-3);
  }
}

// ---------------------------------------------------------------------------
// init

TEST_CASE("init_weights: deterministic per seed, differs across seeds") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights a = init_weights(cfg, 42);
  PredNetWeights b = init_weights(cfg, 42);
  PredNetWeights c = init_weights(cfg, 43);
  CHECK(a.stem_k.values() == b.stem_k.values());
  CHECK(a.head_w.values() == b.head_w.values());
  CHECK(a.units[1].conv2_k.values() == b.units[1].conv2_k.values());
  CHECK(a.stem_k.values() != c.stem_k.values());
}

TEST_CASE("init_weights: kernel variance tracks 2/fan_in") {
  PredNetConfig cfg;
  cfg.context_size = 11;
  cfg.channels = 16;
  cfg.num_residual_units = 5;
  PredNetWeights w = init_weights(cfg, 7);
  // pool all residual-unit kernels: fan_in = 16 * 9, > 10^4 draws
  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  for (const auto& u : w.units)
    for (const Tensor* t : {&u.conv1_k, &u.conv2_k})
      for (float v : t->values()) {
        sum += v;
        sq += static_cast<double>(v) * v;
        ++n;
      }
  REQUIRE(n >= 10000);
  const double var = sq / n - (sum / n) * (sum / n);
  const double expect = 2.0 / (16 * 9);
  CHECK(var > 0.8 * expect);
  CHECK(var < 1.2 * expect);
  CHECK(w.stem_b.values() == std::vector<float>(16, 0.0f));
  CHECK(w.units[0].bn1.gamma.values() == std::vector<float>(16, 1.0f));
  CHECK(w.units[0].bn1.beta.values() == std::vector<float>(16, 0.0f));
}

// ---------------------------------------------------------------------------
// serialization

TEST_CASE("weights: save/load round trip is bit-identical") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 11);
  // make running stats non-trivial so they round-trip too
  w.units[0].bn1.running_mean[2] = 0.25f;
  w.units[1].bn2.running_var[1] = 3.5f;
  const std::string path = scratch_dir() + "/roundtrip.pnw";
  save_weights(w, path);
  PredNetWeights r = load_weights(path);

  auto pa = w.parameters();
  auto pb = r.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->values() == pb[i]->values());
  CHECK(r.units[0].bn1.running_mean[2] == 0.25f);
  CHECK(r.units[1].bn2.running_var[1] == 3.5f);
  CHECK(r.config.context_size == cfg.context_size);
  CHECK(weights_fingerprint(r) == weights_fingerprint(w));
}

TEST_CASE("weights: distinct error kinds for distinct corruptions") {
  PredNetConfig cfg = tiny_config();
  PredNetWeights w = init_weights(cfg, 12);
  const std::string path = scratch_dir() + "/corrupt.pnw";
  save_weights(w, path);

  auto bytes = [&]() {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  }();

  auto rewrite = [&](std::vector<char> v) {
    std::ofstream out(path, std::ios::binary);
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
  };

  SUBCASE("bad magic") {
    auto v = bytes;
    v[0] = 'X';
    rewrite(v);
    try {
      load_weights(path);
      FAIL("expected WeightIoError");
    } catch (const WeightIoError& e) {
      CHECK(e.kind == WeightIoError::Kind::BadMagic);
    }
  }
  SUBCASE("bad version") {
    auto v = bytes;
    v[4] = 99;
    rewrite(v);
    try {
      load_weights(path);
      FAIL("expected WeightIoError");
    } catch (const WeightIoError& e) {
      CHECK(e.kind == WeightIoError::Kind::BadVersion);
    }
  }
  SUBCASE("truncated mid-tensor") {
    auto v = bytes;
    v.resize(v.size() / 2);
    rewrite(v);
    try {
      load_weights(path);
      FAIL("expected WeightIoError");
    } catch (const WeightIoError& e) {
      CHECK(e.kind == WeightIoError::Kind::Truncated);
    }
  }
  SUBCASE("flipped payload byte") {
    auto v = bytes;
    v[v.size() / 2] = static_cast<char>(v[v.size() / 2] ^ 0x40);
    rewrite(v);
    try {
      load_weights(path);
      FAIL("expected WeightIoError");
    } catch (const WeightIoError& e) {
      const bool detected = e.kind == WeightIoError::Kind::BadChecksum ||
                            e.kind == WeightIoError::Kind::Truncated;
      CHECK(detected);
    }
  }
  SUBCASE("refine loader rejects prediction-net files") {
    rewrite(bytes);
    try {
      load_refine_weights(path);
      FAIL("expected WeightIoError");
    } catch (const WeightIoError& e) {
      CHECK(e.kind == WeightIoError::Kind::BadKind);
    }
  }
}

TEST_CASE("refine weights: round trip and fingerprint stability") {
  RefineNetWeights w = init_refine_weights(21);
  const std::string path = scratch_dir() + "/refine.pnw";
  save_refine_weights(w, path);
  RefineNetWeights r = load_refine_weights(path);
  auto pa = w.parameters();
  auto pb = r.parameters();
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->values() == pb[i]->values());
  CHECK(refine_fingerprint(w) == refine_fingerprint(r));
}

// ---------------------------------------------------------------------------
// refinement network

TEST_CASE("refine: identity weights pass the first input through") {
  RefineNetWeights w = identity_refine_weights();
  for (float p1 : {0.0f, 0.37f, 1.0f, -0.4f, 2.5f}) {
    CHECK(refine_forward(w, p1, 0.9f, -3.0f) == doctest::Approx(p1).epsilon(1e-5));
  }
}

TEST_CASE("refine: all-zero weights emit the output bias") {
  RefineNetWeights w = init_refine_weights(1);
  for (Tensor* t : w.parameters())
    for (auto& v : t->values()) v = 0.0f;
  w.b3[0] = 0.625f;
  CHECK(refine_forward(w, 0.1f, 0.2f, 0.3f) == doctest::Approx(0.625f));
}

TEST_CASE("refine: symmetric averaging weights average the triple") {
  // route each input through a +/- pair, then average the three recovered
  // values in the output layer
  RefineNetWeights w = init_refine_weights(2);
  for (Tensor* t : w.parameters())
    for (auto& v : t->values()) v = 0.0f;
  const float inv = 1.0f / 1.2f;
  for (int i = 0; i < 3; ++i) {
    w.w1.at2(2 * i, i) = 1.0f;
    w.w1.at2(2 * i + 1, i) = -1.0f;
    w.w2.at2(2 * i, 2 * i) = inv;
    w.w2.at2(2 * i, 2 * i + 1) = -inv;
    w.w2.at2(2 * i + 1, 2 * i) = -inv;
    w.w2.at2(2 * i + 1, 2 * i + 1) = inv;
    w.w3.at2(0, 2 * i) = inv / 3.0f;
    w.w3.at2(0, 2 * i + 1) = -inv / 3.0f;
  }
  CHECK(refine_forward(w, 1.0f, 2.0f, 3.0f) == doctest::Approx(2.0f).epsilon(1e-5));
}

TEST_CASE("refine: gradients match finite differences") {
  std::mt19937 rng(31);
  RefineNetWeights w = init_refine_weights(31);
  Tensor triples({4, 3});
  fill_uniform(triples, rng, 0.0f, 1.0f);
  const auto proj = random_projection(4, rng);

  auto f = [&]() { return project(refine_forward_batch(w, triples), proj); };
  RefineTape tape;
  refine_forward_batch(w, triples, &tape);
  RefineGrads grads = refine_backward(w, tape, Tensor({4, 1}, proj));
  auto params = w.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    CAPTURE(i);
    CHECK(max_rel_error(grads.tensors[i].values(), fd_gradient(*params[i], f)) < 1e-3);
  }
}
