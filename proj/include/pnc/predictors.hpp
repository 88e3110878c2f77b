#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/image.hpp"
#include "pnc/model.hpp"

namespace pnc {

enum class PredictorId : uint8_t { Left = 0, Gap = 1, PredNet = 2, PredNetR = 3 };

const char* predictor_name(PredictorId id);
PredictorId predictor_from_name(const std::string& name);  // left|gap|prednet|prednet-r

// Predictions of the network predictors are in normalized [0,1] units;
// baselines work directly in 8-bit sample units.
bool predictor_is_normalized(PredictorId id);

// Causal neighborhood used by GAP; missing neighbors are substituted with the
// nearest available causal sample (see causal_sample).
struct CausalNeighbors {
  uint8_t W, N, NW, NE, WW, NN, NNE;
};

// Sample at (cx,cy) as seen when predicting (x,y): clamps to the nearest
// raster-prior pixel; the first pixel of the image has no causal data and
// reads as 128.
uint8_t causal_sample(const GrayImage& image, int cx, int cy, int x, int y);

CausalNeighbors gather_neighbors(const GrayImage& image, int x, int y);

// CALIC's gradient adjusted prediction: switches between horizontal and
// vertical half-predictions on the local gradient estimates, constants
// 80/32/8 from the published algorithm.
double gap_predict(const CausalNeighbors& n);

// Left neighbor; column 0 predicts 128.
double left_predict(const GrayImage& image, int x, int y);

struct PredictionMap {
  int width = 0;
  int height = 0;
  PredictorId predictor = PredictorId::Left;
  std::vector<double> values;  // per-pixel predictions, row-major

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
};

// Everything the network predictors need at inference time.
struct PredictorResources {
  const PredNetWeights* l1 = nullptr;
  const PredNetWeights* l2 = nullptr;
  const PredNetWeights* linf = nullptr;
  const RefineNetWeights* refine = nullptr;

  const PredNetWeights& primary() const;  // the net used by PredictorId::PredNet
  void require(PredictorId id) const;
};

// Single-pixel prediction from causal data only; shared by the image driver
// and the codec (identical arithmetic on both sides).
double predict_pixel(const GrayImage& image, int x, int y, PredictorId id,
                     const PredictorResources& res);

// Raster-scan prediction of a whole image. Row-batched for the network
// predictors; per-sample results are bit-identical to predict_pixel.
PredictionMap predict_image(const GrayImage& image, PredictorId id,
                            const PredictorResources& res = {});

}  // namespace pnc
