#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dynedit {

// 8-bit RGB, row-major, 3 bytes per pixel.
void write_png(const std::string& path, int width, int height, const std::uint8_t* rgb);

struct PngImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};
PngImage read_png(const std::string& path);

}  // namespace dynedit
