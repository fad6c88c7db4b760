#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "metasci/pgm.hpp"
#include "metasci/sci_forward.hpp"

namespace metasci {

struct ReportRow {
  std::string scene;
  double psnr = 0.0;
  double ssim = 0.0;
  double adapt_seconds = 0.0;
  double test_seconds = 0.0;  // per measurement, adaptation excluded
};

struct Report {
  std::string method;
  std::string config;
  std::vector<ReportRow> rows;

  /// Mean of every column over the rows; scene = "average".
  ReportRow average() const;
  /// Aligned table with an average line.
  std::string to_text() const;
  /// Header plus one line per row and the average, full precision.
  std::string to_csv() const;
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

/// Frames of `video` clamped to [0, 1] and quantized to 8 bits.
GrayImage to_gray(const Image& frame);

/// Ground-truth frames on the top row, reconstruction below, separated by a gap.
GrayImage montage(const VideoBlock& truth, const VideoBlock& recon, std::size_t gap = 2);

}  // namespace metasci
