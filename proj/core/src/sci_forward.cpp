#include "metasci/sci_forward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "metasci/pgm.hpp"

namespace metasci {

MaskSet::MaskSet(std::size_t frames, std::size_t rows, std::size_t cols,
                 std::vector<std::uint8_t> values, double density, std::uint64_t seed)
    : frames_(frames), rows_(rows), cols_(cols), density_(density), seed_(seed), values_(std::move(values)) {
  if (frames == 0 || rows == 0 || cols == 0) throw InvalidArgument("MaskSet: zero dimension");
  if (values_.size() != frames * rows * cols) {
    throw DimensionMismatch("MaskSet: expected " + std::to_string(frames * rows * cols) +
                            " values, got " + std::to_string(values_.size()));
  }
  for (std::uint8_t v : values_) {
    if (v > 1) throw InvalidArgument("MaskSet: entries must be 0 or 1");
  }
}

std::size_t MaskSet::coverage(std::size_t i, std::size_t j) const {
  std::size_t c = 0;
  for (std::size_t b = 0; b < frames_; ++b) c += at(b, i, j);
  return c;
}

Image MaskSet::coverage_map() const {
  Image out({rows_, cols_});
  for (std::size_t b = 0; b < frames_; ++b) {
    const auto f = frame(b);
    for (std::size_t p = 0; p < pixels(); ++p) out[p] += f[p];
  }
  return out;
}

std::uint64_t MaskSet::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
      h ^= (v >> (8 * k)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(frames_);
  mix(rows_);
  mix(cols_);
  for (std::uint8_t v : values_) {
    h ^= v;
    h *= 1099511628211ull;
  }
  return h;
}

VideoBlock::VideoBlock(Tensor<double> data) : data_(std::move(data)) {
  if (data_.rank() != 3) {
    throw DimensionMismatch("VideoBlock expects [frames, rows, cols], got " + shape_string(data_.shape()));
  }
}

Image VideoBlock::frame(std::size_t b) const {
  const std::size_t n = rows() * cols();
  std::vector<double> v(data_.data() + b * n, data_.data() + (b + 1) * n);
  return Image({rows(), cols()}, std::move(v));
}

SensingMatrix::SensingMatrix(const MaskSet& masks)
    : frames_(masks.frames()), pixels_(masks.pixels()), diagonals_(masks.values().begin(), masks.values().end()) {}

std::vector<double> SensingMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols()) {
    throw DimensionMismatch("SensingMatrix::apply: expected " + std::to_string(cols()) + " entries");
  }
  std::vector<double> y(pixels_, 0.0);
  for (std::size_t b = 0; b < frames_; ++b) {
    const double* d = diagonals_.data() + b * pixels_;
    const double* xb = x.data() + b * pixels_;
    for (std::size_t p = 0; p < pixels_; ++p) y[p] += d[p] * xb[p];
  }
  return y;
}

std::vector<double> SensingMatrix::apply_transpose(std::span<const double> y) const {
  if (y.size() != rows()) {
    throw DimensionMismatch("SensingMatrix::apply_transpose: expected " + std::to_string(rows()) + " entries");
  }
  std::vector<double> x(cols());
  for (std::size_t b = 0; b < frames_; ++b)
    for (std::size_t p = 0; p < pixels_; ++p) x[b * pixels_ + p] = diagonals_[b * pixels_ + p] * y[p];
  return x;
}

double SensingMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t b = 0; b < frames_; ++b) s += diagonals_[b * pixels_ + i];
  return s;
}

MaskSet generate_masks(std::size_t frames, std::size_t rows, std::size_t cols, double p,
                       std::uint64_t seed) {
  if (frames == 0 || rows == 0 || cols == 0) throw InvalidArgument("generate_masks: zero dimension");
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("generate_masks: density must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  const std::size_t n = rows * cols;
  std::vector<std::uint8_t> v(frames * n);
  for (auto& x : v) x = uniform01(rng) < p ? 1 : 0;
  std::uniform_int_distribution<std::size_t> pick(0, frames - 1);
  for (std::size_t px = 0; px < n; ++px) {
    bool covered = false;
    for (std::size_t b = 0; b < frames && !covered; ++b) covered = v[b * n + px] != 0;
    if (!covered) v[pick(rng) * n + px] = 1;
  }
  return MaskSet(frames, rows, cols, std::move(v), p, seed);
}

Measurement encode(const VideoBlock& video, const MaskSet& masks, double sigma, std::uint64_t seed) {
  if (video.frames() != masks.frames() || video.rows() != masks.rows() || video.cols() != masks.cols()) {
    throw DimensionMismatch("encode: video " + shape_string(video.tensor().shape()) + " vs masks [" +
                            std::to_string(masks.frames()) + "," + std::to_string(masks.rows()) + "," +
                            std::to_string(masks.cols()) + "]");
  }
  if (sigma < 0.0) throw InvalidArgument("encode: noise std must be >= 0");
  const std::size_t n = masks.pixels();
  Measurement y{Image({masks.rows(), masks.cols()}), std::nullopt};
  const double* x = video.tensor().data();
  for (std::size_t b = 0; b < masks.frames(); ++b) {
    const auto c = masks.frame(b);
    for (std::size_t p = 0; p < n; ++p) y.values[p] += x[b * n + p] * c[p];
  }
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t p = 0; p < n; ++p) y.values[p] += noise(rng);
    y.noise = NoiseRecord{sigma, seed};
  }
  return y;
}

SensingMatrix build_sensing_matrix(const MaskSet& masks) { return SensingMatrix(masks); }

Image normalize_measurement(const Measurement& y, const MaskSet& masks) {
  if (y.rows() != masks.rows() || y.cols() != masks.cols()) {
    throw DimensionMismatch("normalize_measurement: measurement and masks differ in size");
  }
  const Image cov = masks.coverage_map();
  Image out({masks.rows(), masks.cols()});
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (cov[p] == 0.0) {
      throw PreconditionViolation("normalize_measurement: pixel " + std::to_string(p) + " has zero mask coverage");
    }
    out[p] = y.values[p] / cov[p];
  }
  return out;
}

FusedInput fuse_input(const Image& normalized, const MaskSet& masks) {
  if (normalized.rank() != 2 || normalized.dim(0) != masks.rows() || normalized.dim(1) != masks.cols()) {
    throw DimensionMismatch("fuse_input: normalized measurement " + shape_string(normalized.shape()) +
                            " does not match masks");
  }
  const std::size_t B = masks.frames();
  const std::size_t n = masks.pixels();
  FusedInput out{Tensor<double>({masks.rows(), masks.cols(), B + 1})};
  for (std::size_t p = 0; p < n; ++p) {
    double* px = out.values.data() + p * (B + 1);
    px[0] = normalized[p];
    for (std::size_t b = 0; b < B; ++b) px[b + 1] = normalized[p] * masks.values()[b * n + p];
  }
  return out;
}

VideoBlock load_frames(const std::filesystem::path& dir, std::size_t count) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm frames in " + dir.string());
  if (count > 0) {
    if (files.size() < count) {
      throw IoError(dir.string() + ": need " + std::to_string(count) + " frames, found " +
                    std::to_string(files.size()));
    }
    files.resize(count);
  }
  std::vector<GrayImage> imgs;
  for (const auto& f : files) {
    imgs.push_back(read_pgm(f));
    if (imgs.back().rows != imgs.front().rows || imgs.back().cols != imgs.front().cols) {
      throw IoError(f.string() + ": frame dimensions differ from " + files.front().string());
    }
  }
  VideoBlock v(imgs.size(), imgs.front().rows, imgs.front().cols);
  const std::size_t n = imgs.front().rows * imgs.front().cols;
  for (std::size_t b = 0; b < imgs.size(); ++b)
    for (std::size_t p = 0; p < n; ++p) v.tensor()[b * n + p] = imgs[b].pixels[p] / 255.0;
  return v;
}

void save_frames(const VideoBlock& video, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::size_t n = video.rows() * video.cols();
  for (std::size_t b = 0; b < video.frames(); ++b) {
    GrayImage img{video.rows(), video.cols(), std::vector<std::uint8_t>(n)};
    for (std::size_t p = 0; p < n; ++p) {
      const double x = std::clamp(video.tensor()[b * n + p], 0.0, 1.0);
      img.pixels[p] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.pgm", prefix.c_str(), b);
    write_pgm(dir / name, img);
  }
}

std::vector<std::size_t> axis_origins(std::size_t dim, std::size_t tile, std::size_t stride) {
  if (tile == 0 || tile > dim) {
    throw InvalidArgument("tile size " + std::to_string(tile) + " does not fit dimension " + std::to_string(dim));
  }
  if (stride == 0) throw InvalidArgument("stride must be positive");
  std::vector<std::size_t> out;
  for (std::size_t o = 0;; o += stride) {
    const std::size_t clamped = std::min(o, dim - tile);
    if (out.empty() || out.back() != clamped) out.push_back(clamped);
    if (clamped == dim - tile) break;
  }
  return out;
}

std::vector<VideoBlock> crop_blocks(const VideoBlock& video, std::size_t tile, std::size_t stride) {
  if (tile > std::min(video.rows(), video.cols())) {
    throw InvalidArgument("crop_blocks: tile " + std::to_string(tile) + " larger than frame");
  }
  const auto rows = axis_origins(video.rows(), tile, stride);
  const auto cols = axis_origins(video.cols(), tile, stride);
  std::vector<VideoBlock> out;
  for (std::size_t r : rows)
    for (std::size_t c : cols) {
      VideoBlock crop(video.frames(), tile, tile);
      for (std::size_t b = 0; b < video.frames(); ++b)
        for (std::size_t i = 0; i < tile; ++i)
          for (std::size_t j = 0; j < tile; ++j) crop.at(b, i, j) = video.at(b, r + i, c + j);
      out.push_back(std::move(crop));
    }
  return out;
}

}  // namespace metasci
