#pragma once

#include "metasci/sci_forward.hpp"

namespace metasci {

/// Reported for identical inputs.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE); kPsnrCap when MSE is 0.
double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak = 1.0);
/// Per-frame PSNR averaged over frames.
double psnr(const VideoBlock& a, const VideoBlock& b, double peak = 1.0);

/// PSNR over the pixels where region[i*cols + j] != 0, per frame then averaged.
double region_psnr(const VideoBlock& a, const VideoBlock& b, const std::vector<std::uint8_t>& region,
                   double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

/// Mean local SSIM over all full (valid) Gaussian windows of a 2-D frame.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});
/// Per-frame SSIM averaged over frames.
double ssim(const VideoBlock& a, const VideoBlock& b, const SsimOptions& opts = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(std::size_t window, double sigma);

}  // namespace metasci
