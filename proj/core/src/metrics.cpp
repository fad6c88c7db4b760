#include "metasci/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace metasci {

double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw InvalidArgument("psnr: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const VideoBlock& a, const VideoBlock& b, double peak) {
  require_same_shape(a.tensor(), b.tensor(), "psnr");
  double sum = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f) sum += psnr(a.frame(f), b.frame(f), peak);
  return sum / static_cast<double>(a.frames());
}

double region_psnr(const VideoBlock& a, const VideoBlock& b, const std::vector<std::uint8_t>& region, double peak) {
  require_same_shape(a.tensor(), b.tensor(), "region_psnr");
  const std::size_t n = a.rows() * a.cols();
  if (region.size() != n) throw DimensionMismatch("region_psnr: region mask size");
  const auto count = static_cast<double>(std::count_if(region.begin(), region.end(), [](auto r) { return r != 0; }));
  if (count == 0) throw InvalidArgument("region_psnr: empty region");
  double sum = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f) {
    double se = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!region[p]) continue;
      const double d = a.tensor()[f * n + p] - b.tensor()[f * n + p];
      se += d * d;
    }
    sum += se == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(peak * peak / (se / count)));
  }
  return sum / static_cast<double>(a.frames());
}

std::vector<double> gaussian_taps(std::size_t window, double sigma) {
  std::vector<double> g(window);
  const double c = 0.5 * static_cast<double>(window - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double x = static_cast<double>(i) - c;
    g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

namespace {

// Valid-mode separable filtering of an H x W image.
Image filter_valid(const Image& x, const std::vector<double>& g) {
  const std::size_t h = x.dim(0), w = x.dim(1), k = g.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  Image rows({h, ow});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += g[t] * x.at(i, j + t);
      rows.at(i, j) = s;
    }
  Image out({oh, ow});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += g[t] * rows.at(i + t, j);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& o) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 2) throw InvalidArgument("ssim: expected a 2-D frame");
  if (a.dim(0) < o.window || a.dim(1) < o.window) {
    throw InvalidArgument("ssim: frame " + shape_string(a.shape()) + " smaller than the " + std::to_string(o.window) +
                          "x" + std::to_string(o.window) + " window");
  }
  const auto g = gaussian_taps(o.window, o.sigma);
  Image aa(a.shape()), bb(a.shape()), ab(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Image ma = filter_valid(a, g), mb = filter_valid(b, g);
  const Image saa = filter_valid(aa, g), sbb = filter_valid(bb, g), sab = filter_valid(ab, g);
  const double c1 = (o.k1 * o.range) * (o.k1 * o.range);
  const double c2 = (o.k2 * o.range) * (o.k2 * o.range);
  double sum = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    const double mu_a = ma[i], mu_b = mb[i];
    const double va = saa[i] - mu_a * mu_a, vb = sbb[i] - mu_b * mu_b, cov = sab[i] - mu_a * mu_b;
    sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(ma.size());
}

double ssim(const VideoBlock& a, const VideoBlock& b, const SsimOptions& opts) {
  require_same_shape(a.tensor(), b.tensor(), "ssim");
  double sum = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f) sum += ssim(a.frame(f), b.frame(f), opts);
  return sum / static_cast<double>(a.frames());
}

}  // namespace metasci
