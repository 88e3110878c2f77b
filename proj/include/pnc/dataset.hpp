#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/image.hpp"
#include "pnc/model.hpp"

namespace pnc {

enum class SourceTag : uint8_t { S = 0, SPrime = 1 };

// Decodes every PNG/PGM in a directory into 8-bit grayscale, sorted by
// filename. Unreadable files are skipped with a warning on stderr.
std::vector<GrayImage> ingest_images(const std::string& directory,
                                     std::vector<std::string>* names = nullptr);

// Sampled training patches. Context windows are materialized contiguously;
// targets are the true normalized pixel values at each origin.
class PatchDataset {
 public:
  PatchDataset(int context_size, SourceTag tag, uint64_t seed)
      : context_size_(context_size), tag_(tag), seed_(seed) {}

  int64_t size() const { return targets_.size(); }
  int context_size() const { return context_size_; }
  SourceTag tag() const { return tag_; }
  uint64_t seed() const { return seed_; }

  const float* context(int64_t i) const {
    return windows_.data() + i * context_size_ * context_size_;
  }
  float target(int64_t i) const { return targets_[i]; }
  // origin of sample i: (image index, x, y)
  void origin(int64_t i, int& image, int& x, int& y) const {
    image = origins_[3 * i];
    x = origins_[3 * i + 1];
    y = origins_[3 * i + 2];
  }

  void append(const GrayImage& image, int image_index, int x, int y);

  // Gather a batch tensor [B,1,cs,cs] and its targets [B,1].
  void gather(const std::vector<int64_t>& indices, Tensor& contexts, Tensor& targets) const;

 private:
  int context_size_;
  SourceTag tag_;
  uint64_t seed_;
  std::vector<float> windows_;
  std::vector<float> targets_;
  std::vector<int32_t> origins_;
};

// Uniform random centers over all pixel positions of all images,
// reproducible per seed.
PatchDataset sample_patches(const std::vector<GrayImage>& images, int64_t count,
                            const PredNetConfig& config, uint64_t seed,
                            SourceTag tag = SourceTag::S);

}  // namespace pnc
