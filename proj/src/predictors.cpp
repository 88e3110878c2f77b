#include "pnc/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pnc {

const char* predictor_name(PredictorId id) {
  switch (id) {
    case PredictorId::Left: return "left";
    case PredictorId::Gap: return "gap";
    case PredictorId::PredNet: return "prednet";
    case PredictorId::PredNetR: return "prednet-r";
  }
  return "?";
}

PredictorId predictor_from_name(const std::string& name) {
  if (name == "left") return PredictorId::Left;
  if (name == "gap") return PredictorId::Gap;
  if (name == "prednet") return PredictorId::PredNet;
  if (name == "prednet-r" || name == "prednet_r") return PredictorId::PredNetR;
  throw std::invalid_argument("unknown predictor '" + name +
                              "' (use left|gap|prednet|prednet-r)");
}

bool predictor_is_normalized(PredictorId id) {
  return id == PredictorId::PredNet || id == PredictorId::PredNetR;
}

uint8_t causal_sample(const GrayImage& image, int cx, int cy, int x, int y) {
  cy = std::clamp(cy, 0, y);
  if (cy == y) {
    if (x == 0) {
      if (y == 0) return 128;  // no causal data at all
      cy = y - 1;
      cx = std::clamp(cx, 0, image.width - 1);
    } else {
      cx = std::clamp(cx, 0, x - 1);
    }
  } else {
    cx = std::clamp(cx, 0, image.width - 1);
  }
  return image.at(cx, cy);
}

CausalNeighbors gather_neighbors(const GrayImage& image, int x, int y) {
  CausalNeighbors n;
  n.W = causal_sample(image, x - 1, y, x, y);
  n.WW = causal_sample(image, x - 2, y, x, y);
  n.N = causal_sample(image, x, y - 1, x, y);
  n.NW = causal_sample(image, x - 1, y - 1, x, y);
  n.NE = causal_sample(image, x + 1, y - 1, x, y);
  n.NN = causal_sample(image, x, y - 2, x, y);
  n.NNE = causal_sample(image, x + 1, y - 2, x, y);
  return n;
}

double gap_predict(const CausalNeighbors& n) {
  const int dh = std::abs(n.W - n.WW) + std::abs(n.N - n.NW) + std::abs(n.N - n.NE);
  const int dv = std::abs(n.W - n.NW) + std::abs(n.N - n.NN) + std::abs(n.NE - n.NNE);
  const int d = dv - dh;
  if (d > 80) return n.W;    // sharp horizontal edge
  if (d < -80) return n.N;   // sharp vertical edge
  double p = (n.W + n.N) / 2.0 + (n.NE - n.NW) / 4.0;
  if (d > 32)
    p = (p + n.W) / 2.0;
  else if (d > 8)
    p = (3.0 * p + n.W) / 4.0;
  else if (d < -32)
    p = (p + n.N) / 2.0;
  else if (d < -8)
    p = (3.0 * p + n.N) / 4.0;
  return p;
}

double left_predict(const GrayImage& image, int x, int y) {
  return x == 0 ? 128.0 : static_cast<double>(image.at(x - 1, y));
}

const PredNetWeights& PredictorResources::primary() const {
  if (!l1) throw std::invalid_argument("predictor needs prediction-net weights");
  return *l1;
}

void PredictorResources::require(PredictorId id) const {
  if (id == PredictorId::PredNet && !l1)
    throw std::invalid_argument("prednet predictor needs one weight set");
  if (id == PredictorId::PredNetR && (!l1 || !l2 || !linf || !refine))
    throw std::invalid_argument("prednet-r predictor needs three stage-1 weight sets and refine weights");
}

double predict_pixel(const GrayImage& image, int x, int y, PredictorId id,
                     const PredictorResources& res) {
  switch (id) {
    case PredictorId::Left:
      return left_predict(image, x, y);
    case PredictorId::Gap:
      if (x == 0 && y == 0) return 128.0;
      return gap_predict(gather_neighbors(image, x, y));
    case PredictorId::PredNet: {
      Tensor ctx = make_context_batch(image, {{x, y}}, res.primary().config);
      return prednet_forward_eval(res.primary(), ctx)[0];
    }
    case PredictorId::PredNetR: {
      Tensor ctx = make_context_batch(image, {{x, y}}, res.l1->config);
      const float p1 = prednet_forward_eval(*res.l1, ctx)[0];
      const float p2 = prednet_forward_eval(*res.l2, ctx)[0];
      const float pinf = prednet_forward_eval(*res.linf, ctx)[0];
      return refine_forward(*res.refine, p1, p2, pinf);
    }
  }
  throw std::invalid_argument("predict_pixel: bad predictor id");
}

PredictionMap predict_image(const GrayImage& image, PredictorId id,
                            const PredictorResources& res) {
  if (image.num_pixels() == 0) throw std::invalid_argument("predict_image: empty image");
  res.require(id);
  PredictionMap map;
  map.width = image.width;
  map.height = image.height;
  map.predictor = id;
  map.values.resize(image.num_pixels());

  if (id == PredictorId::Left || id == PredictorId::Gap) {
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        map.at(x, y) = predict_pixel(image, x, y, id, res);
    return map;
  }

  // Network predictors: batch one row of contexts at a time. Per-sample
  // forward arithmetic is independent of batch size, so this matches the
  // codec's pixel-at-a-time path exactly.
  std::vector<std::pair<int, int>> centers(image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) centers[x] = {x, y};
    Tensor batch = make_context_batch(image, centers, res.primary().config);
    if (id == PredictorId::PredNet) {
      Tensor pred = prednet_forward_eval(res.primary(), batch);
      for (int x = 0; x < image.width; ++x) map.at(x, y) = pred[x];
    } else {
      Tensor p1 = prednet_forward_eval(*res.l1, batch);
      Tensor p2 = prednet_forward_eval(*res.l2, batch);
      Tensor pinf = prednet_forward_eval(*res.linf, batch);
      Tensor triples({image.width, 3});
      for (int x = 0; x < image.width; ++x) {
        triples.at2(x, 0) = p1[x];
        triples.at2(x, 1) = p2[x];
        triples.at2(x, 2) = pinf[x];
      }
      Tensor out = refine_forward_batch(*res.refine, triples);
      for (int x = 0; x < image.width; ++x) map.at(x, y) = out[x];
    }
  }
  return map;
}

}  // namespace pnc
