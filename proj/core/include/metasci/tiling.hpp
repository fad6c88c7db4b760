#pragma once

// Large-scale reconstruction by spatial decomposition into t x t tiles.

#include <cstddef>
#include <string>
#include <vector>

#include "metasci/fast_adaptation.hpp"
#include "metasci/sci_forward.hpp"

namespace metasci {

struct TileOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

struct TilePlan {
  std::size_t tile = 0;
  std::size_t overlap = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_origins;
  std::vector<std::size_t> col_origins;

  std::size_t count() const noexcept { return row_origins.size() * col_origins.size(); }
  /// Row-major over (row origin, col origin); this is the plan order.
  std::vector<TileOrigin> origins() const;

  /// "tile=.. overlap=.. rows=.. cols=..\nrow_origins=a,b,..\ncol_origins=a,b,..\n"
  std::string serialize() const;
  static TilePlan parse(const std::string& text);
  friend bool operator==(const TilePlan&, const TilePlan&) = default;
};

/// Origins step by (t - v) per axis; the last is clamped to dim - t.
TilePlan plan_tiles(std::size_t rows, std::size_t cols, std::size_t tile, std::size_t overlap);

Measurement extract_tile(const Measurement& y, TileOrigin o, std::size_t tile);
MaskSet extract_tile(const MaskSet& masks, TileOrigin o, std::size_t tile);
VideoBlock extract_tile(const VideoBlock& video, TileOrigin o, std::size_t tile);

enum class BlendMode {
  kAverage,     // unweighted mean of every covering tile
  kCenterCrop,  // pixel taken from the covering tile with the nearest center
};

/// Per-pixel weight of tile k in the blend.
Image blend_weights(const TilePlan& plan, std::size_t k, BlendMode mode);
/// Sum over tiles of blend_weights; 1 everywhere for a valid plan.
Image blend_weight_sum(const TilePlan& plan, BlendMode mode);

/// Pixels within `width` of an internal tile edge of `plan` (1 = inside the band).
std::vector<std::uint8_t> seam_band(const TilePlan& plan, std::size_t width);

/// Accumulates tiles in plan order in 64-bit.
VideoBlock assemble(const std::vector<VideoBlock>& tiles, const TilePlan& plan, BlendMode mode = BlendMode::kAverage);

/// extract -> reconstruct per tile (parallel) -> assemble. `mods` holds one
/// modulation per tile, or a single modulation shared by every tile.
template <class T>
VideoBlock tiled_reconstruct(const Measurement& y, const MaskSet& masks, const BaseParams<T>& base,
                             const std::vector<TaskModulation<T>>& mods, const TilePlan& plan,
                             std::size_t threads = 1, BlendMode mode = BlendMode::kAverage) {
  if (y.rows() != plan.rows || y.cols() != plan.cols) throw DimensionMismatch("tiled_reconstruct: plan/measurement size");
  if (mods.size() != plan.count() && mods.size() != 1) {
    throw InvalidArgument("tiled_reconstruct: " + std::to_string(mods.size()) + " modulations for " +
                          std::to_string(plan.count()) + " tiles");
  }
  const auto origins = plan.origins();
  std::vector<VideoBlock> tiles(origins.size());
  parallel_for(origins.size(), threads, [&](std::size_t k) {
    const TaskModulation<T>& mod = mods.size() == 1 ? mods[0] : mods[k];
    tiles[k] = reconstruct(extract_tile(y, origins[k], plan.tile), extract_tile(masks, origins[k], plan.tile), base, mod);
  });
  return assemble(tiles, plan, mode);
}

}  // namespace metasci
