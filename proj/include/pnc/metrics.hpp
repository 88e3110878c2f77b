#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/image.hpp"
#include "pnc/predictors.hpp"

namespace pnc {

// Integer prediction residuals in coding convention: r = x - quantize(x_hat).
struct ResidualMap {
  int width = 0;
  int height = 0;
  std::vector<int16_t> values;  // in [-255, 255]

  int16_t at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  int16_t& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  int64_t count() const { return static_cast<int64_t>(width) * height; }
};

// Rounded, clamped 8-bit form of one prediction. Network predictions are in
// normalized units and are scaled by 255 first. Rounding is half-up.
uint8_t quantize_prediction(double prediction, bool normalized);

ResidualMap residuals(const GrayImage& image, const PredictionMap& prediction);

struct ResidualStats {
  double l1 = 0.0;       // mean |r|
  double l2 = 0.0;       // RMS
  double linf = 0.0;     // max |r|
  double entropy = 0.0;  // bits/pixel over the residual histogram
  double rho_max = 0.0;
};

// Patchwise Pearson correlation between image and residual map: 16x16
// windows at stride 8, zero-variance patches skipped, max absolute value.
double rho_max(const GrayImage& image, const ResidualMap& map, int patch = 16,
               int stride = 8);

ResidualStats stats(const ResidualMap& map, const GrayImage& image);

// Histogram of residual values, index r + 255, length 511.
std::vector<int64_t> residual_histogram(const ResidualMap& map);
double histogram_entropy(const std::vector<int64_t>& hist);

// Visualization export: pixel = clamp(r + 128, 0, 255), binary P5.
void export_residual_pgm(const ResidualMap& map, const std::string& path);

struct ImageStats {
  std::string image_id;
  ResidualStats stats;
};

struct AggregateOptions {
  std::string predictor = "?";
  // JSON report extras
  bool include_histograms = false;
};

// Per-image rows plus a mean row; every measure (including linf and rho_max)
// is averaged per image.
std::string aggregate_report_csv(const std::vector<ImageStats>& rows,
                                 const AggregateOptions& opt);
// JSON mirror with pooled entropy and optional per-image histograms.
std::string aggregate_report_json(const std::vector<ImageStats>& rows,
                                  const std::vector<const ResidualMap*>& maps,
                                  const AggregateOptions& opt);

ResidualStats mean_stats(const std::vector<ImageStats>& rows);

}  // namespace pnc
