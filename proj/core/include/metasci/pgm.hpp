#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace metasci {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5), maxval <= 255. Header comments are skipped.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace metasci
