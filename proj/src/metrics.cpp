#include "pnc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pnc {

uint8_t quantize_prediction(double prediction, bool normalized) {
  const double scaled = normalized ? 255.0 * prediction : prediction;
  const double rounded = std::floor(scaled + 0.5);  // half-up
  return static_cast<uint8_t>(std::clamp(rounded, 0.0, 255.0));
}

ResidualMap residuals(const GrayImage& image, const PredictionMap& prediction) {
  if (image.width != prediction.width || image.height != prediction.height)
    throw std::invalid_argument("residuals: dimension mismatch");
  const bool normalized = predictor_is_normalized(prediction.predictor);
  ResidualMap map;
  map.width = image.width;
  map.height = image.height;
  map.values.resize(image.num_pixels());
  for (int64_t i = 0; i < image.num_pixels(); ++i) {
    const int q = quantize_prediction(prediction.values[i], normalized);
    map.values[i] = static_cast<int16_t>(static_cast<int>(image.pixels[i]) - q);
  }
  return map;
}

std::vector<int64_t> residual_histogram(const ResidualMap& map) {
  std::vector<int64_t> hist(511, 0);
  for (int16_t r : map.values) hist[r + 255]++;
  return hist;
}

double histogram_entropy(const std::vector<int64_t>& hist) {
  int64_t total = 0;
  for (int64_t c : hist) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (int64_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double rho_max(const GrayImage& image, const ResidualMap& map, int patch, int stride) {
  if (image.width < patch || image.height < patch)
    throw std::invalid_argument("rho_max: image smaller than one patch");
  if (image.width != map.width || image.height != map.height)
    throw std::invalid_argument("rho_max: dimension mismatch");

  double best = 0.0;
  const int n = patch * patch;
  for (int py = 0; py + patch <= image.height; py += stride) {
    for (int px = 0; px + patch <= image.width; px += stride) {
      double sa = 0.0, sb = 0.0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          sa += image.at(px + dx, py + dy);
          sb += map.at(px + dx, py + dy);
        }
      const double ma = sa / n, mb = sb / n;
      double saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
          const double a = image.at(px + dx, py + dy) - ma;
          const double b = map.at(px + dx, py + dy) - mb;
          saa += a * a;
          sbb += b * b;
          sab += a * b;
        }
      if (saa <= 0.0 || sbb <= 0.0) continue;  // zero-variance patch
      best = std::max(best, std::abs(sab) / std::sqrt(saa * sbb));
    }
  }
  return best;
}

ResidualStats stats(const ResidualMap& map, const GrayImage& image) {
  if (map.count() == 0) throw std::invalid_argument("stats: empty residual map");
  ResidualStats s;
  double sum_abs = 0.0, sum_sq = 0.0;
  int maxabs = 0;
  for (int16_t r : map.values) {
    const int a = std::abs(r);
    sum_abs += a;
    sum_sq += static_cast<double>(r) * r;
    maxabs = std::max(maxabs, a);
  }
  const double n = static_cast<double>(map.count());
  s.l1 = sum_abs / n;
  s.l2 = std::sqrt(sum_sq / n);
  s.linf = maxabs;
  s.entropy = histogram_entropy(residual_histogram(map));
  s.rho_max = (image.width >= 16 && image.height >= 16) ? rho_max(image, map) : 0.0;
  return s;
}

void export_residual_pgm(const ResidualMap& map, const std::string& path) {
  GrayImage img(map.width, map.height);
  for (int64_t i = 0; i < map.count(); ++i)
    img.pixels[i] = static_cast<uint8_t>(std::clamp(map.values[i] + 128, 0, 255));
  write_pgm(img, path);
}

ResidualStats mean_stats(const std::vector<ImageStats>& rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate: empty row list");
  ResidualStats m;
  for (const auto& r : rows) {
    m.l1 += r.stats.l1;
    m.l2 += r.stats.l2;
    m.linf += r.stats.linf;
    m.entropy += r.stats.entropy;
    m.rho_max += r.stats.rho_max;
  }
  const double n = static_cast<double>(rows.size());
  m.l1 /= n;
  m.l2 /= n;
  m.linf /= n;
  m.entropy /= n;
  m.rho_max /= n;
  return m;
}

static void csv_row(std::ostringstream& out, const std::string& id,
                    const std::string& predictor, const ResidualStats& s) {
  out << id << ',' << predictor << ',' << s.l1 << ',' << s.l2 << ',' << s.linf
      << ',' << s.entropy << ',' << s.rho_max << '\n';
}

std::string aggregate_report_csv(const std::vector<ImageStats>& rows,
                                 const AggregateOptions& opt) {
  std::ostringstream out;
  out.precision(10);
  out << "image,predictor,l1,l2,linf,entropy,rho_max\n";
  for (const auto& r : rows) csv_row(out, r.image_id, opt.predictor, r.stats);
  csv_row(out, "mean", opt.predictor, mean_stats(rows));
  return out.str();
}

std::string aggregate_report_json(const std::vector<ImageStats>& rows,
                                  const std::vector<const ResidualMap*>& maps,
                                  const AggregateOptions& opt) {
  nlohmann::json doc;
  doc["predictor"] = opt.predictor;
  auto stats_json = [](const ResidualStats& s) {
    return nlohmann::json{{"l1", s.l1},
                          {"l2", s.l2},
                          {"linf", s.linf},
                          {"entropy", s.entropy},
                          {"rho_max", s.rho_max}};
  };
  doc["images"] = nlohmann::json::array();
  std::vector<int64_t> pooled(511, 0);
  for (size_t i = 0; i < rows.size(); ++i) {
    nlohmann::json row = stats_json(rows[i].stats);
    row["image"] = rows[i].image_id;
    if (i < maps.size() && maps[i]) {
      auto hist = residual_histogram(*maps[i]);
      for (int k = 0; k < 511; ++k) pooled[k] += hist[k];
      if (opt.include_histograms) row["histogram"] = hist;
    }
    doc["images"].push_back(std::move(row));
  }
  doc["mean"] = stats_json(mean_stats(rows));
  if (!maps.empty()) doc["pooled_entropy"] = histogram_entropy(pooled);
  return doc.dump(2);
}

}  // namespace pnc
