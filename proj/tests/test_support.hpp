#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pnc/tensor.hpp"

namespace pnc::testing {

// Central finite differences of a scalar functional of one tensor's entries.
// The perturbed values are read back after the float store, so the divisor is
// the difference actually applied.
inline std::vector<double> fd_gradient(Tensor& t, const std::function<double()>& f,
                                       double h = 1e-3) {
  std::vector<double> g(t.numel());
  for (int64_t i = 0; i < t.numel(); ++i) {
    const float orig = t[i];
    t[i] = static_cast<float>(orig + h);
    const double hi = t[i];
    const double fp = f();
    t[i] = static_cast<float>(orig - h);
    const double lo = t[i];
    const double fm = f();
    t[i] = orig;
    g[i] = (fp - fm) / (hi - lo);
  }
  return g;
}

// Scalar projection of a tensor output; double accumulation keeps the
// finite-difference signal clean.
inline double project(const Tensor& out, const std::vector<float>& proj) {
  double s = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) s += static_cast<double>(out[i]) * proj[i];
  return s;
}

// Largest relative deviation between analytic and numeric gradients,
// normalized by max(1, |a|, |n|): relative where gradients are large,
// absolute below unit scale. With float32 storage and h = 1e-3 the
// finite-difference estimate itself is only good to a few 1e-4 absolute,
// so a bare ratio would measure rounding noise on near-zero entries.
inline double max_rel_error(const std::vector<float>& analytic,
                            const std::vector<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1.0});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

inline void fill_uniform(Tensor& t, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  for (auto& v : t.values()) v = uniform_float(rng, lo, hi);
}

inline std::vector<float> random_projection(int64_t n, std::mt19937& rng) {
  std::vector<float> proj(n);
  for (auto& v : proj) v = uniform_float(rng, -1.0f, 1.0f);
  return proj;
}

// Repo-relative test data; overridable so installed test binaries still work.
inline std::string data_dir() {
  if (const char* env = std::getenv("PNC_TEST_DATA")) return env;
  return std::string(PNC_SOURCE_DIR) + "/tests/data";
}

inline std::string scratch_dir() {
  if (const char* env = std::getenv("PNC_TEST_SCRATCH")) return env;
  return ".";
}

}  // namespace pnc::testing
