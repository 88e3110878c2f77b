#include "pnc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pnc {

void check_finite(const Tensor& t, const std::string& what) {
  for (float v : t.values())
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite value in " + what);
}

static void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// conv2d

static void check_conv_shapes(const Tensor& input, const Tensor& kernel,
                              const Tensor* bias) {
  require(input.ndim() == 4, "conv2d: input must be [B,Cin,H,W], got " + input.shape_str());
  require(kernel.ndim() == 4, "conv2d: kernel must be [Cout,Cin,K,K], got " + kernel.shape_str());
  require(kernel.dim(2) == kernel.dim(3) && kernel.dim(2) % 2 == 1,
          "conv2d: kernel must be square with odd size, got " + kernel.shape_str());
  require(kernel.dim(1) == input.dim(1),
          "conv2d: channel mismatch, input " + input.shape_str() + " vs kernel " + kernel.shape_str());
  if (bias)
    require(bias->numel() == kernel.dim(0),
            "conv2d: bias length " + std::to_string(bias->numel()) +
                " does not match Cout " + std::to_string(kernel.dim(0)));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_conv_shapes(input, kernel, &bias);
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(0), K = kernel.dim(2), pad = K / 2;

  Tensor out({B, Cout, H, W});
  const float* in = input.data();
  const float* kn = kernel.data();
  float* op = out.data();

  const int64_t in_c = static_cast<int64_t>(H) * W;
  const int64_t in_b = in_c * Cin;
  const int64_t out_c = static_cast<int64_t>(H) * W;
  const int64_t out_b = out_c * Cout;

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      std::vector<double> row(W);
      for (int oy = 0; oy < H; ++oy) {
        std::fill(row.begin(), row.end(), static_cast<double>(bias[co]));
        for (int ci = 0; ci < Cin; ++ci) {
          const float* inp = in + b * in_b + ci * in_c;
          const float* kp = kn + ((static_cast<int64_t>(co) * Cin + ci) * K) * K;
          for (int ky = 0; ky < K; ++ky) {
            const int iy = oy + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const float* irow = inp + static_cast<int64_t>(iy) * W;
            for (int kx = 0; kx < K; ++kx) {
              const double kv = kp[ky * K + kx];
              const int shift = kx - pad;
              const int x0 = std::max(0, -shift);
              const int x1 = std::min(W, W - shift);
              for (int ox = x0; ox < x1; ++ox) row[ox] += kv * irow[ox + shift];
            }
          }
        }
        float* orow = op + b * out_b + co * out_c + static_cast<int64_t>(oy) * W;
        for (int ox = 0; ox < W; ++ox) orow[ox] = static_cast<float>(row[ox]);
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel,
                            const Tensor& grad_out) {
  check_conv_shapes(input, kernel, nullptr);
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(0), K = kernel.dim(2), pad = K / 2;
  require(grad_out.shape() == std::vector<int>({B, Cout, H, W}),
          "conv2d_backward: grad_out shape " + grad_out.shape_str());

  Conv2dGrads g{Tensor({B, Cin, H, W}), Tensor({Cout, Cin, K, K}), Tensor({Cout})};
  const float* in = input.data();
  const float* kn = kernel.data();
  const float* go = grad_out.data();

  const int64_t cplane = static_cast<int64_t>(H) * W;

  // grad input: correlation of grad_out with the kernel flipped in both axes.
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int ci = 0; ci < Cin; ++ci) {
      std::vector<double> row(W);
      float* girow_base = g.input.data() + (static_cast<int64_t>(b) * Cin + ci) * cplane;
      for (int iy = 0; iy < H; ++iy) {
        std::fill(row.begin(), row.end(), 0.0);
        for (int co = 0; co < Cout; ++co) {
          const float* gop = go + (static_cast<int64_t>(b) * Cout + co) * cplane;
          const float* kp = kn + ((static_cast<int64_t>(co) * Cin + ci) * K) * K;
          for (int ky = 0; ky < K; ++ky) {
            const int oy = iy - ky + pad;
            if (oy < 0 || oy >= H) continue;
            const float* grow = gop + static_cast<int64_t>(oy) * W;
            for (int kx = 0; kx < K; ++kx) {
              const double kv = kp[ky * K + kx];
              const int shift = pad - kx;  // ox = ix + pad - kx
              const int x0 = std::max(0, -shift);
              const int x1 = std::min(W, W - shift);
              for (int ix = x0; ix < x1; ++ix) row[ix] += kv * grow[ix + shift];
            }
          }
        }
        float* girow = girow_base + static_cast<int64_t>(iy) * W;
        for (int ix = 0; ix < W; ++ix) girow[ix] = static_cast<float>(row[ix]);
      }
    }
  }

  // grad kernel and bias.
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Cout; ++co) {
    double bsum = 0.0;
    for (int ci = 0; ci < Cin; ++ci) {
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          double acc = 0.0;
          const int shift = kx - pad;
          for (int b = 0; b < B; ++b) {
            const float* gop = go + (static_cast<int64_t>(b) * Cout + co) * cplane;
            const float* inp = in + (static_cast<int64_t>(b) * Cin + ci) * cplane;
            for (int oy = 0; oy < H; ++oy) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= H) continue;
              const float* grow = gop + static_cast<int64_t>(oy) * W;
              const float* irow = inp + static_cast<int64_t>(iy) * W;
              const int x0 = std::max(0, -shift);
              const int x1 = std::min(W, W - shift);
              for (int ox = x0; ox < x1; ++ox) acc += static_cast<double>(grow[ox]) * irow[ox + shift];
            }
          }
          g.kernel[((static_cast<int64_t>(co) * Cin + ci) * K + ky) * K + kx] =
              static_cast<float>(acc);
        }
      }
    }
    for (int b = 0; b < B; ++b) {
      const float* gop = go + (static_cast<int64_t>(b) * Cout + co) * cplane;
      for (int64_t i = 0; i < cplane; ++i) bsum += gop[i];
    }
    g.bias[co] = static_cast<float>(bsum);
  }
  return g;
}

// ---------------------------------------------------------------------------
// batchnorm

Tensor batchnorm(const Tensor& input, BatchNormState& state, BnMode mode,
                 BnCache* cache) {
  require(input.ndim() == 4, "batchnorm: input must be [B,C,H,W], got " + input.shape_str());
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(C == state.channels(), "batchnorm: channel mismatch");
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t n = static_cast<int64_t>(B) * plane;

  Tensor out({B, C, H, W});
  const float* in = input.data();
  float* op = out.data();

  if (mode == BnMode::Train && n < 2)
    throw std::invalid_argument("batchnorm: train mode needs at least 2 elements per channel");

  std::vector<double> mean(C), inv_std(C);
  for (int c = 0; c < C; ++c) {
    double mu, var;
    if (mode == BnMode::Train) {
      double s = 0.0;
      for (int b = 0; b < B; ++b) {
        const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
      }
      mu = s / static_cast<double>(n);
      double sq = 0.0;
      for (int b = 0; b < B; ++b) {
        const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(n);  // biased, matches the normalizer
      state.running_mean[c] = static_cast<float>(state.momentum * state.running_mean[c] +
                                                 (1.0 - state.momentum) * mu);
      state.running_var[c] = static_cast<float>(state.momentum * state.running_var[c] +
                                                (1.0 - state.momentum) * var);
    } else {
      mu = state.running_mean[c];
      var = state.running_var[c];
    }
    mean[c] = mu;
    inv_std[c] = 1.0 / std::sqrt(var + static_cast<double>(state.eps));
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const double mu = mean[c], is = inv_std[c];
      const double gm = state.gamma[c], bt = state.beta[c];
      const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
      float* q = op + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i)
        q[i] = static_cast<float>((p[i] - mu) * is * gm + bt);
    }
  }

  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BnGrads batchnorm_backward(const Tensor& input, const BatchNormState& state,
                           const BnCache& cache, const Tensor& grad_out) {
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  const double n = static_cast<double>(B) * plane;

  BnGrads g{Tensor({B, C, H, W}), Tensor({C}), Tensor({C})};
  const float* in = input.data();
  const float* go = grad_out.data();

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double mu = cache.mean[c], is = cache.inv_std[c];
    const double gm = state.gamma[c];
    // dbeta = sum(dy); dgamma = sum(dy * xhat);
    // sums over the batch feed the input gradient of every element.
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
      const float* gp = go + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double xhat = (p[i] - mu) * is;
        sum_dy += gp[i];
        sum_dy_xhat += gp[i] * xhat;
      }
    }
    g.beta[c] = static_cast<float>(sum_dy);
    g.gamma[c] = static_cast<float>(sum_dy_xhat);
    for (int b = 0; b < B; ++b) {
      const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
      const float* gp = go + (static_cast<int64_t>(b) * C + c) * plane;
      float* gi = g.input.data() + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double xhat = (p[i] - mu) * is;
        gi[i] = static_cast<float>(gm * is * (gp[i] - sum_dy / n - xhat * sum_dy_xhat / n));
      }
    }
  }
  return g;
}

BnGrads batchnorm_backward_eval(const Tensor& input, const BatchNormState& state,
                                const Tensor& grad_out) {
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;

  BnGrads g{Tensor({B, C, H, W}), Tensor({C}), Tensor({C})};
  const float* in = input.data();
  const float* go = grad_out.data();
  for (int c = 0; c < C; ++c) {
    const double mu = state.running_mean[c];
    const double is = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps);
    const double gm = state.gamma[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* p = in + (static_cast<int64_t>(b) * C + c) * plane;
      const float* gp = go + (static_cast<int64_t>(b) * C + c) * plane;
      float* gi = g.input.data() + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += gp[i];
        sum_dy_xhat += gp[i] * (p[i] - mu) * is;
        gi[i] = static_cast<float>(gp[i] * gm * is);
      }
    }
    g.beta[c] = static_cast<float>(sum_dy);
    g.gamma[c] = static_cast<float>(sum_dy_xhat);
  }
  return g;
}

// ---------------------------------------------------------------------------
// leaky ReLU

Tensor leaky_relu(const Tensor& input, float slope) {
  Tensor out(input.shape());
  const float* p = input.data();
  float* q = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) q[i] = p[i] >= 0.0f ? p[i] : slope * p[i];
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, float slope, const Tensor& grad_out) {
  require(input.same_shape(grad_out), "leaky_relu_backward: shape mismatch");
  Tensor g(input.shape());
  const float* p = input.data();
  const float* go = grad_out.data();
  float* q = g.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) q[i] = p[i] >= 0.0f ? go[i] : slope * go[i];
  return g;
}

// ---------------------------------------------------------------------------
// linear

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require(input.ndim() == 2, "linear: input must be [B,N], got " + input.shape_str());
  require(weights.ndim() == 2, "linear: weights must be [M,N], got " + weights.shape_str());
  require(weights.dim(1) == input.dim(1),
          "linear: width mismatch, input " + input.shape_str() + " vs weights " + weights.shape_str());
  require(bias.numel() == weights.dim(0), "linear: bias length mismatch");
  const int B = input.dim(0), N = input.dim(1), M = weights.dim(0);

  Tensor out({B, M});
  for (int b = 0; b < B; ++b) {
    const float* x = input.data() + static_cast<int64_t>(b) * N;
    for (int m = 0; m < M; ++m) {
      const float* w = weights.data() + static_cast<int64_t>(m) * N;
      double acc = bias[m];
      for (int i = 0; i < N; ++i) acc += static_cast<double>(w[i]) * x[i];
      out.at2(b, m) = static_cast<float>(acc);
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out) {
  const int B = input.dim(0), N = input.dim(1), M = weights.dim(0);
  require(grad_out.shape() == std::vector<int>({B, M}), "linear_backward: grad_out shape");

  LinearGrads g{Tensor({B, N}), Tensor({M, N}), Tensor({M})};
  for (int b = 0; b < B; ++b) {
    const float* x = input.data() + static_cast<int64_t>(b) * N;
    float* gi = g.input.data() + static_cast<int64_t>(b) * N;
    for (int m = 0; m < M; ++m) {
      const double go = grad_out.at2(b, m);
      const float* w = weights.data() + static_cast<int64_t>(m) * N;
      float* gw = g.weights.data() + static_cast<int64_t>(m) * N;
      for (int i = 0; i < N; ++i) {
        gi[i] = static_cast<float>(gi[i] + go * w[i]);
        gw[i] = static_cast<float>(gw[i] + go * x[i]);
      }
      g.bias[m] = static_cast<float>(g.bias[m] + go);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// losses

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::L1: return "l1";
    case Objective::L2: return "l2";
    case Objective::Lp8: return "lp8";
  }
  return "?";
}

Objective objective_from_name(const std::string& name) {
  if (name == "l1") return Objective::L1;
  if (name == "l2") return Objective::L2;
  if (name == "lp8" || name == "linf" || name == "l8") return Objective::Lp8;
  throw std::invalid_argument("unknown objective '" + name + "' (use l1|l2|linf)");
}

LossResult loss(const Tensor& residuals, Objective objective) {
  const int64_t n = residuals.numel();
  require(n >= 1, "loss: empty residual batch");
  const float* r = residuals.data();
  LossResult res;
  res.grad = Tensor(residuals.shape());
  float* g = res.grad.data();

  switch (objective) {
    case Objective::L1: {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(r[i]));
      res.value = s / static_cast<double>(n);
      const double inv = 1.0 / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i)
        g[i] = static_cast<float>(r[i] > 0.0f ? inv : (r[i] < 0.0f ? -inv : 0.0));
      break;
    }
    case Objective::L2: {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += static_cast<double>(r[i]) * r[i];
      res.value = s / static_cast<double>(n);
      const double inv = 2.0 / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) g[i] = static_cast<float>(inv * r[i]);
      break;
    }
    case Objective::Lp8: {
      double maxabs = 0.0;
      for (int64_t i = 0; i < n; ++i)
        maxabs = std::max(maxabs, std::abs(static_cast<double>(r[i])));
      if (maxabs == 0.0) {
        res.value = 0.0;  // grad all zero
        break;
      }
      // Factor out the max so |r/M|^8 cannot overflow.
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double t = std::abs(static_cast<double>(r[i])) / maxabs;
        const double t2 = t * t, t4 = t2 * t2;
        s += t4 * t4;
      }
      const double mean8 = s / static_cast<double>(n);
      const double root = std::pow(mean8, 1.0 / 8.0);  // in (0,1]
      res.value = maxabs * root;
      // dL/dr_i = sign(r_i)/n * (|r_i|/L)^7
      const double inv = 1.0 / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        const double t = std::abs(static_cast<double>(r[i])) / maxabs / root;
        const double t2 = t * t, t4 = t2 * t2;
        const double mag = inv * t4 * t2 * t;
        g[i] = static_cast<float>(r[i] > 0.0f ? mag : (r[i] < 0.0f ? -mag : 0.0));
      }
      break;
    }
  }
  return res;
}

LossResult l1_penalty(const Tensor& weights) {
  LossResult res;
  res.grad = Tensor(weights.shape());
  const float* w = weights.data();
  float* g = res.grad.data();
  double s = 0.0;
  for (int64_t i = 0; i < weights.numel(); ++i) {
    s += std::abs(static_cast<double>(w[i]));
    g[i] = w[i] > 0.0f ? 1.0f : (w[i] < 0.0f ? -1.0f : 0.0f);
  }
  res.value = s;
  return res;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(Tensor& params, const std::vector<float>& grads, AdamState& state,
               const std::string& block) {
  const int64_t n = params.numel();
  if (static_cast<int64_t>(grads.size()) != n ||
      static_cast<int64_t>(state.m.size()) != n ||
      static_cast<int64_t>(state.v.size()) != n)
    throw std::invalid_argument("adam_step: state/grad size mismatch for " + block);
  for (float gv : grads)
    if (!std::isfinite(gv))
      throw std::runtime_error("adam_step: non-finite gradient in " + block);

  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  float* p = params.data();
  for (int64_t i = 0; i < n; ++i) {
    const double gv = grads[i];
    const double m = b1 * state.m[i] + (1.0 - b1) * gv;
    const double v = b2 * state.v[i] + (1.0 - b2) * gv * gv;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    p[i] = static_cast<float>(p[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
  }
}

}  // namespace pnc
