#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/tensor.hpp"

namespace pnc {

// Layer primitives with explicit reverse-mode backward functions. Every op is
// a pure function of its inputs plus the state structs passed in; reductions
// accumulate in double before the float store.

// ---------------------------------------------------------------------------
// conv2d: input [B,Cin,H,W] * kernel [Cout,Cin,K,K] + bias [Cout]
//         -> [B,Cout,H,W], stride 1, zero padding K/2 (odd K).
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel,
                            const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis of [B,C,H,W].
enum class BnMode : uint8_t { Train, Eval };

struct BatchNormState {
  Tensor gamma;         // [C], learned
  Tensor beta;          // [C], learned
  std::vector<float> running_mean;  // [C]
  std::vector<float> running_var;   // [C]
  float momentum = 0.9f;
  float eps = 1e-5f;

  explicit BatchNormState(int channels = 1)
      : gamma({channels}), beta({channels}),
        running_mean(channels, 0.0f), running_var(channels, 1.0f) {
    for (int c = 0; c < channels; ++c) gamma[c] = 1.0f;
  }
  int channels() const { return gamma.dim(0); }
};

// Per-batch values needed by the backward pass (train mode).
struct BnCache {
  std::vector<double> mean;     // batch mean per channel
  std::vector<double> inv_std;  // 1/sqrt(var+eps) per channel
};

// Train mode normalizes by batch statistics (biased variance), applies
// gamma/beta, and updates running stats in place. Eval mode uses the running
// stats only and leaves state untouched.
Tensor batchnorm(const Tensor& input, BatchNormState& state, BnMode mode,
                 BnCache* cache = nullptr);

struct BnGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BnGrads batchnorm_backward(const Tensor& input, const BatchNormState& state,
                           const BnCache& cache, const Tensor& grad_out);
// Eval-mode backward (running stats are constants).
BnGrads batchnorm_backward_eval(const Tensor& input, const BatchNormState& state,
                                const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Leaky ReLU, slope on the negative side. Derivative at exactly 0 is 1.
Tensor leaky_relu(const Tensor& input, float slope = 0.2f);
Tensor leaky_relu_backward(const Tensor& input, float slope, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Affine map: input [B,N] * weights [M,N]^T + bias [M] -> [B,M].
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Loss family over a residual batch [B,1] (or any flat tensor).
enum class Objective : uint8_t { L1 = 0, L2 = 1, Lp8 = 2 };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);  // accepts l1|l2|lp8|linf

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d residual, same shape as input
};

// l1: mean |r|; l2: mean r^2; lp8: (mean |r|^8)^(1/8), max-factored so large
// residuals cannot overflow. Subgradient at r=0 is 0 for l1/lp8.
LossResult loss(const Tensor& residuals, Objective objective);

// Sum of |w| with subgradient sign(w), 0 at 0.
LossResult l1_penalty(const Tensor& weights);

// ---------------------------------------------------------------------------
// Adam with bias correction. One state per parameter tensor.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  int64_t t = 0;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
  float lr = 1e-4f;

  explicit AdamState(int64_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

// In-place update of params from grads. Throws std::runtime_error naming
// `block` if any gradient is non-finite.
void adam_step(Tensor& params, const std::vector<float>& grads, AdamState& state,
               const std::string& block = "params");

}  // namespace pnc
