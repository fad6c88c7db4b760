#pragma once

// Generalized alternating projection with total-variation denoising.

#include <cstddef>
#include <vector>

#include "metasci/sci_forward.hpp"

namespace metasci {

struct GapTvConfig {
  std::size_t iterations = 60;  // K
  double tv_weight = 0.02;      // lambda_tv
  std::size_t tv_steps = 20;    // dual iterations per denoise
  bool accelerate = false;      // accumulate residuals into the projection target
  std::size_t threads = 1;      // frames denoised in parallel

  void validate() const;
};

/// x_b <- x_b + C_b . (Y - sum_b x_b . C_b) / sum_b C_b^2, per pixel.
VideoBlock gap_project(const VideoBlock& x, const Image& y, const MaskSet& masks);
inline VideoBlock gap_project(const VideoBlock& x, const Measurement& y, const MaskSet& masks) {
  return gap_project(x, y.values, masks);
}

/// Anisotropic TV with replicated (zero-gradient) boundaries:
/// sum |u[i+1,j] - u[i,j]| + sum |u[i,j+1] - u[i,j]| over interior pairs.
double total_variation(const Image& u);
/// 0.5 ||u - f||^2 + lambda * TV(u)
double tv_objective(const Image& u, const Image& f, double lambda);

struct TvResult {
  Image image;
  std::vector<double> objective;  // best objective after each step, starting with the input's
};

/// Projected gradient on the dual of the TV problem; returns the best primal
/// iterate seen, so the objective trace never increases.
TvResult tv_denoise_traced(const Image& frame, double lambda, std::size_t steps);
inline Image tv_denoise(const Image& frame, double lambda, std::size_t steps) {
  return tv_denoise_traced(frame, lambda, steps).image;
}

/// Max |Y - sum_b x_b . C_b| over pixels.
double measurement_residual(const VideoBlock& x, const Image& y, const MaskSet& masks);

struct GapTvResult {
  VideoBlock video;                 // clamped to [0, 1]
  std::vector<double> residual;     // right after each projection
  std::vector<double> psnr;         // per iteration, when ground truth is given
};

/// K iterations of (gap_project, per-frame tv_denoise) from x = 0.
GapTvResult gap_tv_reconstruct(const Measurement& y, const MaskSet& masks, const GapTvConfig& cfg,
                               const VideoBlock* truth = nullptr);

}  // namespace metasci
