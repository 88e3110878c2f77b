#include "pnc/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <stdexcept>

namespace pnc {

std::vector<GrayImage> ingest_images(const std::string& directory,
                                     std::vector<std::string>* names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory))
    throw std::runtime_error("not a directory: " + directory);

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && has_image_extension(entry.path().string()))
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());

  std::vector<GrayImage> images;
  for (const auto& p : paths) {
    try {
      images.push_back(read_image(p));
      if (names) names->push_back(fs::path(p).stem().string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << p << ": " << e.what() << "\n";
    }
  }
  if (images.empty())
    throw std::runtime_error("no decodable images in " + directory);
  return images;
}

void PatchDataset::append(const GrayImage& image, int image_index, int x, int y) {
  const size_t off = windows_.size();
  windows_.resize(off + static_cast<size_t>(context_size_) * context_size_);
  fill_context(image, x, y, context_size_, windows_.data() + off);
  targets_.push_back(image.at(x, y) * (1.0f / 255.0f));
  origins_.push_back(image_index);
  origins_.push_back(x);
  origins_.push_back(y);
}

void PatchDataset::gather(const std::vector<int64_t>& indices, Tensor& contexts,
                          Tensor& targets) const {
  const int B = static_cast<int>(indices.size());
  const int64_t win = static_cast<int64_t>(context_size_) * context_size_;
  contexts = Tensor({B, 1, context_size_, context_size_});
  targets = Tensor({B, 1});
  float* cp = contexts.data();
  for (int b = 0; b < B; ++b) {
    const float* src = windows_.data() + indices[b] * win;
    std::copy(src, src + win, cp + b * win);
    targets[b] = targets_[indices[b]];
  }
}

PatchDataset sample_patches(const std::vector<GrayImage>& images, int64_t count,
                            const PredNetConfig& config, uint64_t seed, SourceTag tag) {
  if (count <= 0) throw std::invalid_argument("sample_patches: count must be positive");
  if (images.empty()) throw std::invalid_argument("sample_patches: no images");
  for (const auto& img : images)
    if (img.num_pixels() == 0)
      throw std::invalid_argument("sample_patches: empty image in set");

  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)) ^ 0x51f15eedu);
  PatchDataset ds(config.context_size, tag, seed);
  for (int64_t i = 0; i < count; ++i) {
    const uint32_t idx = uniform_index(rng, static_cast<uint32_t>(images.size()));
    const GrayImage& img = images[idx];
    const int x = static_cast<int>(uniform_index(rng, static_cast<uint32_t>(img.width)));
    const int y = static_cast<int>(uniform_index(rng, static_cast<uint32_t>(img.height)));
    ds.append(img, static_cast<int>(idx), x, y);
  }
  return ds;
}

}  // namespace pnc
