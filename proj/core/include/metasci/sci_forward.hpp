#pragma once

// Optical encoder simulation for video snapshot compressive imaging: binary
// coding masks, coded temporal integration, energy normalization and the
// fused (B+1)-channel network input, plus the sparse sensing-matrix view.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metasci/tensor.hpp"

namespace metasci {

/// 2-D real image [rows, cols].
using Image = Tensor<double>;

/// B binary coding patterns of one encoding system (one task).
class MaskSet {
 public:
  MaskSet() = default;
  /// Wraps explicit values laid out [frame][row][col]; every entry must be 0 or 1.
  MaskSet(std::size_t frames, std::size_t rows, std::size_t cols, std::vector<std::uint8_t> values,
          double density = 0.5, std::uint64_t seed = 0);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t pixels() const noexcept { return rows_ * cols_; }
  double density() const noexcept { return density_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::uint8_t at(std::size_t b, std::size_t i, std::size_t j) const {
    return values_[(b * rows_ + i) * cols_ + j];
  }
  std::span<const std::uint8_t> frame(std::size_t b) const {
    return {values_.data() + b * pixels(), pixels()};
  }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  /// sum_b C_b[i,j]
  std::size_t coverage(std::size_t i, std::size_t j) const;
  Image coverage_map() const;
  /// FNV-1a over dims and values; identifies a mask set in persisted files.
  std::uint64_t hash() const;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;

 private:
  std::size_t frames_ = 0, rows_ = 0, cols_ = 0;
  double density_ = 0.5;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Ground-truth frame stack, values [frame][row][col] in [0, 1].
class VideoBlock {
 public:
  VideoBlock() = default;
  VideoBlock(std::size_t frames, std::size_t rows, std::size_t cols)
      : data_({frames, rows, cols}) {}
  explicit VideoBlock(Tensor<double> data);

  std::size_t frames() const { return data_.dim(0); }
  std::size_t rows() const { return data_.dim(1); }
  std::size_t cols() const { return data_.dim(2); }

  double& at(std::size_t b, std::size_t i, std::size_t j) { return data_.at(b, i, j); }
  double at(std::size_t b, std::size_t i, std::size_t j) const { return data_.at(b, i, j); }
  Image frame(std::size_t b) const;

  const Tensor<double>& tensor() const noexcept { return data_; }
  Tensor<double>& tensor() noexcept { return data_; }

  friend bool operator==(const VideoBlock&, const VideoBlock&) = default;

 private:
  Tensor<double> data_;
};

struct NoiseRecord {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  friend bool operator==(const NoiseRecord&, const NoiseRecord&) = default;
};

/// Coded snapshot Y [rows, cols].
struct Measurement {
  Image values;
  std::optional<NoiseRecord> noise;

  std::size_t rows() const { return values.dim(0); }
  std::size_t cols() const { return values.dim(1); }
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// Network input [rows, cols, B+1]: normalized measurement, then its mask-gated copies.
struct FusedInput {
  Tensor<double> values;

  std::size_t rows() const { return values.dim(0); }
  std::size_t cols() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(2); }
  double channel(std::size_t c, std::size_t i, std::size_t j) const { return values.at(i, j, c); }
};

/// H = [D_1, ..., D_B] with D_b = diag(Vec(C_b)); stores only the B diagonals.
///
/// Vectorization is row-major within a frame, frames stacked b = 1..B, so a
/// VideoBlock's storage is already Vec(X).
class SensingMatrix {
 public:
  explicit SensingMatrix(const MaskSet& masks);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t rows() const noexcept { return pixels_; }
  std::size_t cols() const noexcept { return pixels_ * frames_; }
  std::span<const double> diagonal(std::size_t b) const {
    return {diagonals_.data() + b * pixels_, pixels_};
  }

  /// y = H x, x of length pixels*B.
  std::vector<double> apply(std::span<const double> x) const;
  /// x = H^T y, y of length pixels.
  std::vector<double> apply_transpose(std::span<const double> y) const;
  double row_sum(std::size_t i) const;

 private:
  std::size_t frames_ = 0, pixels_ = 0;
  std::vector<double> diagonals_;
};

/// Draws B x rows x cols iid Bernoulli(p) masks, then repairs zero-coverage
/// pixels by setting one frame (uniform, same RNG stream) to 1.
MaskSet generate_masks(std::size_t frames, std::size_t rows, std::size_t cols, double p,
                       std::uint64_t seed);

/// Y = sum_b X_b . C_b + Z, Z ~ N(0, sigma^2) iid (Z = 0 when sigma = 0).
Measurement encode(const VideoBlock& video, const MaskSet& masks, double sigma = 0.0,
                   std::uint64_t seed = 0);

SensingMatrix build_sensing_matrix(const MaskSet& masks);

/// Ybar = Y ./ sum_b C_b.
Image normalize_measurement(const Measurement& y, const MaskSet& masks);

/// O = [Ybar, Ybar . C_1, ..., Ybar . C_B] along the channel axis.
FusedInput fuse_input(const Image& normalized, const MaskSet& masks);

/// Reads every *.pgm in `dir` in lexicographic order (or the first `count`).
VideoBlock load_frames(const std::filesystem::path& dir, std::size_t count = 0);

/// Writes frames as 8-bit PGMs `<prefix>_000.pgm`, ... (values clamped to [0, 1]).
void save_frames(const VideoBlock& video, const std::filesystem::path& dir,
                 const std::string& prefix = "frame");

/// t x t x B crops at origins on a stride grid; the last origin per axis is clamped.
std::vector<VideoBlock> crop_blocks(const VideoBlock& video, std::size_t tile, std::size_t stride);

/// 0, stride, 2*stride, ... with the last origin clamped to dim - tile, deduplicated.
std::vector<std::size_t> axis_origins(std::size_t dim, std::size_t tile, std::size_t stride);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fused input as an HWC network tensor of the requested precision.
template <class T>
Tensor<T> to_network(const FusedInput& in) {
  return tensor_cast<T>(in.values);
}

/// [B, rows, cols] video as an HWC tensor [rows, cols, B].
template <class T>
Tensor<T> video_to_hwc(const VideoBlock& v) {
  const std::size_t B = v.frames(), R = v.rows(), C = v.cols();
  Tensor<T> out({R, C, B});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) out[(i * C + j) * B + b] = static_cast<T>(v.at(b, i, j));
  return out;
}

/// HWC (or 1HWC) tensor back to a [B, rows, cols] video, optionally clamped to [0, 1].
template <class T>
VideoBlock hwc_to_video(const Tensor<T>& t, bool clamp) {
  const Shape& s = t.shape();
  const std::size_t off = s.size() == 4 ? 1 : 0;
  const std::size_t R = s[off], C = s[off + 1], B = s[off + 2];
  VideoBlock v(B, R, C);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j)
      for (std::size_t b = 0; b < B; ++b) {
        double x = primal(t[(i * C + j) * B + b]);
        if (clamp) x = std::clamp(x, 0.0, 1.0);
        v.at(b, i, j) = x;
      }
  return v;
}

}  // namespace metasci
