#include "metasci/gap_tv.hpp"

#include <algorithm>
#include <cmath>

#include "metasci/metrics.hpp"
#include "metasci/parallel.hpp"

namespace metasci {

void GapTvConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("GapTvConfig: iterations must be >= 1");
  if (!(tv_weight >= 0.0)) throw InvalidArgument("GapTvConfig: tv_weight must be >= 0");
}

VideoBlock gap_project(const VideoBlock& x, const Image& y, const MaskSet& masks) {
  if (x.frames() != masks.frames() || x.rows() != masks.rows() || x.cols() != masks.cols() ||
      y.shape() != Shape{masks.rows(), masks.cols()}) {
    throw DimensionMismatch("gap_project: estimate, measurement and masks disagree in shape");
  }
  VideoBlock out = x;
  for (std::size_t i = 0; i < masks.rows(); ++i)
    for (std::size_t j = 0; j < masks.cols(); ++j) {
      double hx = 0.0, norm = 0.0;
      for (std::size_t b = 0; b < masks.frames(); ++b) {
        const double c = masks.at(b, i, j);
        hx += x.at(b, i, j) * c;
        norm += c * c;
      }
      if (norm == 0.0) {
        throw PreconditionViolation("gap_project: pixel (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") has zero coverage");
      }
      const double r = (y.at(i, j) - hx) / norm;
      for (std::size_t b = 0; b < masks.frames(); ++b) out.at(b, i, j) += masks.at(b, i, j) * r;
    }
  return out;
}

double total_variation(const Image& u) {
  const std::size_t h = u.dim(0), w = u.dim(1);
  double tv = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      if (i + 1 < h) tv += std::abs(u.at(i + 1, j) - u.at(i, j));
      if (j + 1 < w) tv += std::abs(u.at(i, j + 1) - u.at(i, j));
    }
  return tv;
}

double tv_objective(const Image& u, const Image& f, double lambda) {
  require_same_shape(u, f, "tv_objective");
  double fit = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) fit += (u[i] - f[i]) * (u[i] - f[i]);
  return 0.5 * fit + lambda * total_variation(u);
}

TvResult tv_denoise_traced(const Image& frame, double lambda, std::size_t steps) {
  if (frame.rank() != 2) throw InvalidArgument("tv_denoise: expected a 2-D frame");
  TvResult r{frame, {tv_objective(frame, frame, lambda)}};
  if (lambda == 0.0 || steps == 0) return r;
  const std::size_t h = frame.dim(0), w = frame.dim(1);
  // Dual variables on vertical (h-1 x w) and horizontal (h x w-1) differences, stored h x w.
  Image pv({h, w}), ph({h, w}), u = frame;
  const double tau = 1.0 / (8.0 * lambda);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        if (i + 1 < h) pv.at(i, j) = std::clamp(pv.at(i, j) + tau * (u.at(i + 1, j) - u.at(i, j)), -1.0, 1.0);
        if (j + 1 < w) ph.at(i, j) = std::clamp(ph.at(i, j) + tau * (u.at(i, j + 1) - u.at(i, j)), -1.0, 1.0);
      }
    // u = f - lambda * D^T p
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double dtp = 0.0;
        if (i + 1 < h) dtp -= pv.at(i, j);
        if (i > 0) dtp += pv.at(i - 1, j);
        if (j + 1 < w) dtp -= ph.at(i, j);
        if (j > 0) dtp += ph.at(i, j - 1);
        u.at(i, j) = frame.at(i, j) - lambda * dtp;
      }
    const double obj = tv_objective(u, frame, lambda);
    if (obj < r.objective.back()) {
      r.image = u;
      r.objective.push_back(obj);
    } else {
      r.objective.push_back(r.objective.back());
    }
  }
  return r;
}

double measurement_residual(const VideoBlock& x, const Image& y, const MaskSet& masks) {
  double m = 0.0;
  for (std::size_t i = 0; i < masks.rows(); ++i)
    for (std::size_t j = 0; j < masks.cols(); ++j) {
      double hx = 0.0;
      for (std::size_t b = 0; b < masks.frames(); ++b) hx += x.at(b, i, j) * masks.at(b, i, j);
      m = std::max(m, std::abs(y.at(i, j) - hx));
    }
  return m;
}

GapTvResult gap_tv_reconstruct(const Measurement& y, const MaskSet& masks, const GapTvConfig& cfg,
                               const VideoBlock* truth) {
  cfg.validate();
  if (y.rows() != masks.rows() || y.cols() != masks.cols()) throw DimensionMismatch("gap_tv: measurement vs masks");
  GapTvResult out;
  VideoBlock x(masks.frames(), masks.rows(), masks.cols());
  Image target = y.values;
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    if (cfg.accelerate && k > 0) {
      for (std::size_t i = 0; i < masks.rows(); ++i)
        for (std::size_t j = 0; j < masks.cols(); ++j) {
          double hx = 0.0;
          for (std::size_t b = 0; b < masks.frames(); ++b) hx += x.at(b, i, j) * masks.at(b, i, j);
          target.at(i, j) += y.values.at(i, j) - hx;
        }
    }
    x = gap_project(x, target, masks);
    out.residual.push_back(measurement_residual(x, y.values, masks));
    std::vector<Image> frames(x.frames());
    parallel_for(x.frames(), cfg.threads,
                 [&](std::size_t b) { frames[b] = tv_denoise(x.frame(b), cfg.tv_weight, cfg.tv_steps); });
    for (std::size_t b = 0; b < x.frames(); ++b)
      std::copy(frames[b].storage().begin(), frames[b].storage().end(), x.tensor().data() + b * masks.pixels());
    if (!all_finite(x.tensor())) throw NumericFailure("gap_tv: non-finite estimate at iteration " + std::to_string(k));
    if (truth) {
      VideoBlock clamped = x;
      for (double& v : clamped.tensor().storage()) v = std::clamp(v, 0.0, 1.0);
      out.psnr.push_back(psnr(clamped, *truth));
    }
  }
  out.video = std::move(x);
  for (double& v : out.video.tensor().storage()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace metasci
