#include "metasci/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace metasci {

void validate_task(const TaskDataset& task, std::size_t check_samples) {
  const std::size_t n = std::min(check_samples, task.samples.size());
  for (std::size_t k = 0; k < n; ++k) {
    const Sample& s = task.samples[k];
    const double sigma = s.measurement.noise ? s.measurement.noise->sigma : 0.0;
    const std::uint64_t seed = s.measurement.noise ? s.measurement.noise->seed : 0;
    const Measurement rebuilt = encode(s.video, task.masks, sigma, seed);
    if (rebuilt.values.shape() != s.measurement.values.shape() ||
        max_abs_diff(rebuilt.values, s.measurement.values) > 1e-9) {
      throw PreconditionViolation("task " + task.id + ": sample " + std::to_string(k) +
                                  " was not encoded under this task's masks");
    }
  }
}

VideoBlock moving_shapes(std::size_t frames, std::size_t rows, std::size_t cols, std::uint64_t seed,
                         const ShapesOptions& opts) {
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };

  VideoBlock v(frames, rows, cols);
  const double fi = uni(0.0, 1.5), fj = uni(0.0, 1.5), phase = uni(0.0, 2.0 * std::numbers::pi);
  const double bg_level = uni(0.05, 0.3), bg_amp = uni(0.05, 0.2);

  struct Shape2D {
    bool disk;
    double cy, cx, half, level, stripe_amp, stripe_period, vy, vx;
  };
  const double area_factor =
      std::max(1.0, static_cast<double>(rows * cols) / static_cast<double>(opts.reference_area));
  const auto lo = static_cast<std::size_t>(std::round(opts.min_shapes * area_factor));
  const auto hi = static_cast<std::size_t>(std::round(opts.max_shapes * area_factor));
  const std::size_t count = lo + static_cast<std::size_t>(uni(0.0, 1.0) * static_cast<double>(hi - lo + 1));
  std::vector<Shape2D> shapes;
  for (std::size_t k = 0; k < std::min(count, hi); ++k) {
    Shape2D s;
    s.disk = uniform01(rng) < 0.5;
    s.cy = uni(0.0, static_cast<double>(rows));
    s.cx = uni(0.0, static_cast<double>(cols));
    s.half = 0.5 * uni(opts.min_size, opts.max_size);
    s.level = uni(0.35, 0.95);
    s.stripe_amp = uniform01(rng) < 0.5 ? uni(0.05, 0.2) : 0.0;
    s.stripe_period = uni(3.0, 8.0);
    s.vy = uni(-opts.max_speed, opts.max_speed);
    s.vx = uni(-opts.max_speed, opts.max_speed);
    shapes.push_back(s);
  }

  for (std::size_t b = 0; b < frames; ++b) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const double t = 2.0 * std::numbers::pi *
                         (fi * static_cast<double>(i) / static_cast<double>(rows) +
                          fj * static_cast<double>(j) / static_cast<double>(cols));
        v.at(b, i, j) = bg_level + bg_amp * (0.5 + 0.5 * std::sin(t + phase));
      }
    for (const Shape2D& s : shapes) {
      const double cy = s.cy + s.vy * static_cast<double>(b);
      const double cx = s.cx + s.vx * static_cast<double>(b);
      const auto i0 = static_cast<std::ptrdiff_t>(std::floor(cy - s.half));
      const auto i1 = static_cast<std::ptrdiff_t>(std::ceil(cy + s.half));
      const auto j0 = static_cast<std::ptrdiff_t>(std::floor(cx - s.half));
      const auto j1 = static_cast<std::ptrdiff_t>(std::ceil(cx + s.half));
      for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, i0); i <= std::min<std::ptrdiff_t>(rows - 1, i1); ++i)
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, j0); j <= std::min<std::ptrdiff_t>(cols - 1, j1); ++j) {
          const double dy = static_cast<double>(i) - cy;
          const double dx = static_cast<double>(j) - cx;
          const bool inside = s.disk ? dy * dy + dx * dx <= s.half * s.half
                                     : std::abs(dy) <= s.half && std::abs(dx) <= s.half;
          if (!inside) continue;
          const double stripe = s.stripe_amp * std::sin(2.0 * std::numbers::pi * (dx + dy) / s.stripe_period);
          v.at(b, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s.level + stripe;
        }
    }
  }
  for (double& x : v.tensor().storage()) x = std::clamp(x, 0.0, 1.0);
  return v;
}

TaskDataset make_synthetic_task(std::string id, MaskSet masks, std::size_t count, std::uint64_t seed,
                                const ShapesOptions& opts) {
  TaskDataset task{std::move(id), std::move(masks), {}};
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    VideoBlock v = moving_shapes(task.masks.frames(), task.masks.rows(), task.masks.cols(), rng(), opts);
    Measurement y = encode(v, task.masks);
    task.samples.push_back(Sample{std::move(y), std::move(v)});
  }
  return task;
}

IndexStream::IndexStream(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed), order_(n) {
  if (n == 0) throw InvalidArgument("IndexStream: empty dataset");
  reshuffle();
}

void IndexStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::size_t> IndexStream::take(std::size_t k) {
  std::vector<std::size_t> out;
  out.reserve(k);
  while (out.size() < k) {
    if (pos_ == n_) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace metasci
