#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avseg {

// 8-bit interleaved row-major image; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

// Decodes to 8-bit; palettes are expanded, alpha stripped, 16-bit scaled
// down. Grayscale stays single-channel, everything else becomes RGB.
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& image);

}  // namespace avseg
