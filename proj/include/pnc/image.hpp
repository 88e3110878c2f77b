#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pnc {

// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  int64_t num_pixels() const { return static_cast<int64_t>(width) * height; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// BT.601 luma of an 8-bit RGB triple, rounded half-up.
uint8_t luma601(uint8_t r, uint8_t g, uint8_t b);

// PGM, binary P5 (written) and P5/P2 (read), maxval 255.
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

// PNG via libpng; palette/RGB/RGBA inputs are converted to grayscale with
// luma601, 16-bit channels are reduced to 8.
GrayImage read_png(const std::string& path);

// Dispatch on extension (.png/.pgm). Throws std::runtime_error on failure.
GrayImage read_image(const std::string& path);

bool has_image_extension(const std::string& path);

}  // namespace pnc
