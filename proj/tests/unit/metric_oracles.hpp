#pragma once

#include <cmath>

#include "metasci/sci_forward.hpp"

namespace metasci::testing {

// Independent oracles: plain loops, 2-D window built directly from the Gaussian.
inline double oracle_psnr(const Image& a, const Image& b) {
  long double se = 0;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) se += std::pow(a.at(i, j) - b.at(i, j), 2);
  const long double mse = se / (a.dim(0) * a.dim(1));
  return static_cast<double>(10.0L * std::log10(1.0L / mse));
}

inline double oracle_ssim(const Image& a, const Image& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double w[win][win], total = 0;
  for (int u = 0; u < win; ++u)
    for (int v = 0; v < win; ++v) total += w[u][v] = std::exp(-((u - 5) * (u - 5) + (v - 5) * (v - 5)) / (2 * sigma * sigma));
  const std::size_t h = a.dim(0), wd = a.dim(1);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + win <= h; ++i)
    for (std::size_t j = 0; j + win <= wd; ++j) {
      double ma = 0, mb = 0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          ma += w[u][v] / total * a.at(i + u, j + v);
          mb += w[u][v] / total * b.at(i + u, j + v);
        }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          const double da = a.at(i + u, j + v) - ma, db = b.at(i + u, j + v) - mb;
          va += w[u][v] / total * da * da;
          vb += w[u][v] / total * db * db;
          cov += w[u][v] / total * da * db;
        }
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return sum / n;
}

}  // namespace metasci::testing
