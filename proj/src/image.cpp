#include "pnc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace pnc {

uint8_t luma601(uint8_t r, uint8_t g, uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<uint8_t>(std::min(255.0, std::floor(y + 0.5)));
}

// ---------------------------------------------------------------------------
// PGM

static int pnm_token(std::istream& in) {
  // skip whitespace and '#' comments, then read one unsigned decimal
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("pgm: unexpected end of header");
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw std::runtime_error("pgm: malformed header");
  return v;
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char p, n;
  in.get(p).get(n);
  if (p != 'P' || (n != '5' && n != '2'))
    throw std::runtime_error("pgm: bad magic in " + path);
  const bool binary = (n == '5');
  const int w = pnm_token(in);
  const int h = pnm_token(in);
  const int maxval = pnm_token(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("pgm: unsupported header in " + path);

  GrayImage img(w, h);
  if (binary) {
    in.read(reinterpret_cast<char*>(img.pixels.data()), img.num_pixels());
    if (in.gcount() != img.num_pixels())
      throw std::runtime_error("pgm: truncated pixel data in " + path);
  } else {
    for (int64_t i = 0; i < img.num_pixels(); ++i)
      img.pixels[i] = static_cast<uint8_t>(pnm_token(in));
  }
  if (maxval != 255)
    for (auto& px : img.pixels)
      px = static_cast<uint8_t>(std::lround(px * 255.0 / maxval));
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), img.num_pixels());
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// PNG

GrayImage read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  auto closer = std::unique_ptr<std::FILE, int (*)(std::FILE*)>(fp, &std::fclose);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8))
    throw std::runtime_error("png: bad signature in " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: alloc failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: alloc failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: decode error in " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: unsupported channel count in " + path);
  }

  std::vector<uint8_t> row(static_cast<size_t>(w) * ch);
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    if (ch == 1) {
      std::copy(row.begin(), row.end(), img.pixels.begin() + static_cast<size_t>(y) * w);
    } else {
      for (int x = 0; x < w; ++x)
        img.at(x, y) = luma601(row[3 * x], row[3 * x + 1], row[3 * x + 2]);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

bool has_image_extension(const std::string& path) {
  auto dot = path.rfind('.');
  if (dot == std::string::npos) return false;
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == "png" || ext == "pgm";
}

GrayImage read_image(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == "pgm") return read_pgm(path);
  if (ext == "png") return read_png(path);
  throw std::runtime_error("unsupported image format: " + path);
}

}  // namespace pnc
