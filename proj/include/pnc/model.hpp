#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/image.hpp"
#include "pnc/ops.hpp"
#include "pnc/tensor.hpp"

namespace pnc {

struct PredNetConfig {
  int context_size = 21;      // odd, >= 3
  int channels = 32;          // conv width
  int num_residual_units = 16;
  float leak_slope = 0.2f;
  Objective objective = Objective::L1;

  void validate() const;
  bool same_architecture(const PredNetConfig& o) const {
    return context_size == o.context_size && channels == o.channels &&
           num_residual_units == o.num_residual_units && leak_slope == o.leak_slope;
  }
};

// Causally masked, normalized window around one pixel. Entries at or after
// the raster position of the center are exactly 0; entries outside the image
// hold the 0.5 fill (before masking).
struct CausalContext {
  Tensor window;  // [1,1,cs,cs], values in [0,1]
  int origin_x = 0;
  int origin_y = 0;
};

constexpr float kContextFill = 0.5f;

CausalContext extract_context(const GrayImage& image, int x, int y,
                              const PredNetConfig& config);

// Writes one context window directly into `dst` (cs*cs floats); the fast path
// under extract_context and batch assembly.
void fill_context(const GrayImage& image, int x, int y, int context_size, float* dst);

// conv -> BN -> LReLU -> conv -> BN -> LReLU, identity skip added after the
// second activation.
struct ResidualUnit {
  Tensor conv1_k, conv1_b;
  BatchNormState bn1;
  Tensor conv2_k, conv2_b;
  BatchNormState bn2;
};

struct PredNetWeights {
  PredNetConfig config;
  Tensor stem_k;  // [C,1,3,3]
  Tensor stem_b;  // [C]
  std::vector<ResidualUnit> units;
  Tensor head_w;  // [1, C*cs*cs], the regression-layer weights
  Tensor head_b;  // [1]

  // Mutable views over every learned tensor, in serialization order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

PredNetWeights init_weights(const PredNetConfig& config, uint64_t seed);

// Activations saved by a train-mode forward pass for the backward pass.
struct PredNetTape {
  Tensor input;               // [B,1,cs,cs]
  Tensor stem_out;            // [B,C,cs,cs]
  struct UnitTape {
    Tensor in;                // unit input
    Tensor c1, b1, a1, c2, b2;  // intermediate activations
    BnCache bn1, bn2;
  };
  std::vector<UnitTape> units;
  Tensor flat;                // [B, C*cs*cs]
};

// Batched contexts [B,1,cs,cs] -> predictions [B,1] in normalized units.
// Eval mode uses running BN stats and never touches the weights; train mode
// updates running stats and fills `tape`.
Tensor prednet_forward(PredNetWeights& weights, const Tensor& contexts,
                       BnMode mode, PredNetTape* tape = nullptr);
// Eval-only forward over const weights.
Tensor prednet_forward_eval(const PredNetWeights& weights, const Tensor& contexts);

// Gradients w.r.t. every parameter, shaped like `parameters()`.
struct PredNetGrads {
  std::vector<Tensor> tensors;
};
PredNetGrads prednet_backward(const PredNetWeights& weights, const PredNetTape& tape,
                              const Tensor& grad_pred);

// Assemble a batch tensor from contexts extracted at (x,y) positions.
Tensor make_context_batch(const GrayImage& image, const std::vector<std::pair<int, int>>& centers,
                          const PredNetConfig& config);

// ---------------------------------------------------------------------------
// Refinement network: 3 -> 16 -> 16 -> 1 MLP with leaky-ReLU(0.2) hidden
// activations and a linear output.
struct RefineNetWeights {
  static constexpr int kHidden = 16;
  float leak_slope = 0.2f;
  Tensor w1, b1;  // [16,3], [16]
  Tensor w2, b2;  // [16,16], [16]
  Tensor w3, b3;  // [1,16], [1]

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

RefineNetWeights init_refine_weights(uint64_t seed);
// Exact pass-through of input 0 (see refine_identity test); used as the
// stage-2 warm start so the fused predictor starts at PredNet-l1 quality.
RefineNetWeights identity_refine_weights();

float refine_forward(const RefineNetWeights& weights, float p1, float p2, float pinf);

struct RefineTape {
  Tensor input;   // [B,3]
  Tensor z1, a1;  // pre/post activation
  Tensor z2, a2;
};
Tensor refine_forward_batch(const RefineNetWeights& weights, const Tensor& triples,
                            RefineTape* tape = nullptr);
struct RefineGrads {
  std::vector<Tensor> tensors;
};
RefineGrads refine_backward(const RefineNetWeights& weights, const RefineTape& tape,
                            const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Serialization. Container: magic "PNW1", version byte, kind byte
// (0 = prediction net, 1 = refinement net), config integers little-endian,
// tensors in parameter order (u32 ndim, u32 dims, f32 data, all LE), then a
// 32-bit FNV-1a checksum of everything after the version byte.
struct WeightIoError : std::runtime_error {
  enum class Kind { BadMagic, BadVersion, BadKind, Truncated, BadChecksum };
  Kind kind;
  WeightIoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

void save_weights(const PredNetWeights& weights, const std::string& path);
PredNetWeights load_weights(const std::string& path);

void save_refine_weights(const RefineNetWeights& weights, const std::string& path);
RefineNetWeights load_refine_weights(const std::string& path);

// FNV-1a over the serialized payload (as stored in the file); identifies a
// weight set in coded streams.
uint64_t weights_fingerprint(const PredNetWeights& weights);
uint64_t refine_fingerprint(const RefineNetWeights& weights);

uint32_t fnv1a32(const uint8_t* data, size_t n, uint32_t seed = 2166136261u);
uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t seed = 14695981039346656037ull);

}  // namespace pnc
