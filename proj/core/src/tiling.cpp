#include "metasci/tiling.hpp"

#include <limits>
#include <sstream>

namespace metasci {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_numbers(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw IoError("tile plan: bad origin '" + tok + "'");
    }
  }
  return out;
}

void check_origin(std::size_t rows, std::size_t cols, TileOrigin o, std::size_t tile) {
  if (tile == 0 || o.row + tile > rows || o.col + tile > cols) {
    throw InvalidArgument("tile at (" + std::to_string(o.row) + "," + std::to_string(o.col) + ") size " +
                          std::to_string(tile) + " exceeds " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

// Squared distance from pixel (i, j) to the center of the tile at o (doubled coordinates).
std::size_t center_distance(std::size_t i, std::size_t j, TileOrigin o, std::size_t tile) {
  const auto di = static_cast<long long>(2 * i + 1) - static_cast<long long>(2 * o.row + tile);
  const auto dj = static_cast<long long>(2 * j + 1) - static_cast<long long>(2 * o.col + tile);
  return static_cast<std::size_t>(di * di + dj * dj);
}

// For center-crop blending: index of the owning tile per pixel.
std::vector<std::size_t> owners(const TilePlan& plan) {
  const auto origins = plan.origins();
  std::vector<std::size_t> own(plan.rows * plan.cols);
  std::vector<std::size_t> best(own.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < origins.size(); ++k)
    for (std::size_t i = origins[k].row; i < origins[k].row + plan.tile; ++i)
      for (std::size_t j = origins[k].col; j < origins[k].col + plan.tile; ++j) {
        const std::size_t d = center_distance(i, j, origins[k], plan.tile);
        if (d < best[i * plan.cols + j]) {
          best[i * plan.cols + j] = d;
          own[i * plan.cols + j] = k;
        }
      }
  return own;
}

Image coverage_counts(const TilePlan& plan) {
  Image n({plan.rows, plan.cols});
  for (const TileOrigin& o : plan.origins())
    for (std::size_t i = o.row; i < o.row + plan.tile; ++i)
      for (std::size_t j = o.col; j < o.col + plan.tile; ++j) n.at(i, j) += 1.0;
  return n;
}

}  // namespace

std::vector<TileOrigin> TilePlan::origins() const {
  std::vector<TileOrigin> out;
  for (std::size_t r : row_origins)
    for (std::size_t c : col_origins) out.push_back({r, c});
  return out;
}

std::string TilePlan::serialize() const {
  std::ostringstream os;
  os << "tile=" << tile << " overlap=" << overlap << " rows=" << rows << " cols=" << cols << '\n'
     << "row_origins=" << join(row_origins) << '\n'
     << "col_origins=" << join(col_origins) << '\n';
  return os.str();
}

TilePlan TilePlan::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  TilePlan p;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw IoError("tile plan: malformed field '" + tok + "'");
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "row_origins") {
        p.row_origins = split_numbers(val);
      } else if (key == "col_origins") {
        p.col_origins = split_numbers(val);
      } else {
        const auto n = split_numbers(val);
        if (n.size() != 1) throw IoError("tile plan: bad value for " + key);
        if (key == "tile") p.tile = n[0];
        else if (key == "overlap") p.overlap = n[0];
        else if (key == "rows") p.rows = n[0];
        else if (key == "cols") p.cols = n[0];
        else throw IoError("tile plan: unknown field " + key);
        header = true;
      }
    }
  }
  if (!header || p.row_origins.empty() || p.col_origins.empty()) throw IoError("tile plan: incomplete");
  for (std::size_t r : p.row_origins) check_origin(p.rows, p.cols, {r, 0}, p.tile);
  for (std::size_t c : p.col_origins) check_origin(p.rows, p.cols, {0, c}, p.tile);
  return p;
}

TilePlan plan_tiles(std::size_t rows, std::size_t cols, std::size_t tile, std::size_t overlap) {
  if (tile == 0 || tile > std::min(rows, cols)) {
    throw InvalidArgument("plan_tiles: tile " + std::to_string(tile) + " does not fit " + std::to_string(rows) +
                          "x" + std::to_string(cols));
  }
  if (overlap >= tile) throw InvalidArgument("plan_tiles: overlap must be smaller than the tile");
  return TilePlan{tile, overlap, rows, cols, axis_origins(rows, tile, tile - overlap),
                  axis_origins(cols, tile, tile - overlap)};
}

Measurement extract_tile(const Measurement& y, TileOrigin o, std::size_t tile) {
  check_origin(y.rows(), y.cols(), o, tile);
  Measurement out{Image({tile, tile}), y.noise};
  for (std::size_t i = 0; i < tile; ++i)
    for (std::size_t j = 0; j < tile; ++j) out.values.at(i, j) = y.values.at(o.row + i, o.col + j);
  return out;
}

MaskSet extract_tile(const MaskSet& masks, TileOrigin o, std::size_t tile) {
  check_origin(masks.rows(), masks.cols(), o, tile);
  std::vector<std::uint8_t> v(masks.frames() * tile * tile);
  for (std::size_t b = 0; b < masks.frames(); ++b)
    for (std::size_t i = 0; i < tile; ++i)
      for (std::size_t j = 0; j < tile; ++j) v[(b * tile + i) * tile + j] = masks.at(b, o.row + i, o.col + j);
  return MaskSet(masks.frames(), tile, tile, std::move(v), masks.density(), masks.seed());
}

VideoBlock extract_tile(const VideoBlock& video, TileOrigin o, std::size_t tile) {
  check_origin(video.rows(), video.cols(), o, tile);
  VideoBlock out(video.frames(), tile, tile);
  for (std::size_t b = 0; b < video.frames(); ++b)
    for (std::size_t i = 0; i < tile; ++i)
      for (std::size_t j = 0; j < tile; ++j) out.at(b, i, j) = video.at(b, o.row + i, o.col + j);
  return out;
}

namespace {

// Adds tile k's weights into `w`; counts or owners are computed once by the caller.
void add_tile_weights(const TilePlan& plan, TileOrigin o, std::size_t k, BlendMode mode, const Image& counts,
                      const std::vector<std::size_t>& own, Image& w) {
  for (std::size_t i = o.row; i < o.row + plan.tile; ++i)
    for (std::size_t j = o.col; j < o.col + plan.tile; ++j) {
      if (mode == BlendMode::kAverage) w.at(i, j) += 1.0 / counts.at(i, j);
      else if (own[i * plan.cols + j] == k) w.at(i, j) += 1.0;
    }
}

}  // namespace

Image blend_weights(const TilePlan& plan, std::size_t k, BlendMode mode) {
  const auto origins = plan.origins();
  if (k >= origins.size()) throw InvalidArgument("blend_weights: tile index out of range");
  const Image counts = mode == BlendMode::kAverage ? coverage_counts(plan) : Image();
  const auto own = mode == BlendMode::kAverage ? std::vector<std::size_t>() : owners(plan);
  Image w({plan.rows, plan.cols});
  add_tile_weights(plan, origins[k], k, mode, counts, own, w);
  return w;
}

Image blend_weight_sum(const TilePlan& plan, BlendMode mode) {
  const auto origins = plan.origins();
  const Image counts = mode == BlendMode::kAverage ? coverage_counts(plan) : Image();
  const auto own = mode == BlendMode::kAverage ? std::vector<std::size_t>() : owners(plan);
  Image s({plan.rows, plan.cols});
  for (std::size_t k = 0; k < origins.size(); ++k) add_tile_weights(plan, origins[k], k, mode, counts, own, s);
  return s;
}

std::vector<std::uint8_t> seam_band(const TilePlan& plan, std::size_t width) {
  std::vector<std::uint8_t> rows(plan.rows, 0), cols(plan.cols, 0);
  auto mark = [width](std::vector<std::uint8_t>& axis, const std::vector<std::size_t>& origins, std::size_t tile) {
    for (std::size_t o : origins) {
      for (std::size_t edge : {o, o + tile}) {
        if (edge == 0 || edge == axis.size()) continue;
        const std::size_t lo = edge >= width ? edge - width : 0;
        for (std::size_t i = lo; i < std::min(axis.size(), edge + width); ++i) axis[i] = 1;
      }
    }
  };
  mark(rows, plan.row_origins, plan.tile);
  mark(cols, plan.col_origins, plan.tile);
  std::vector<std::uint8_t> band(plan.rows * plan.cols, 0);
  for (std::size_t i = 0; i < plan.rows; ++i)
    for (std::size_t j = 0; j < plan.cols; ++j) band[i * plan.cols + j] = rows[i] | cols[j];
  return band;
}

VideoBlock assemble(const std::vector<VideoBlock>& tiles, const TilePlan& plan, BlendMode mode) {
  if (tiles.size() != plan.count()) {
    throw InvalidArgument("assemble: " + std::to_string(tiles.size()) + " tiles for a plan of " +
                          std::to_string(plan.count()));
  }
  const auto origins = plan.origins();
  const std::size_t frames = tiles.empty() ? 0 : tiles[0].frames();
  for (const auto& t : tiles) {
    if (t.frames() != frames || t.rows() != plan.tile || t.cols() != plan.tile) {
      throw DimensionMismatch("assemble: tile shape differs from plan");
    }
  }
  VideoBlock out(frames, plan.rows, plan.cols);
  if (mode == BlendMode::kAverage) {
    const Image n = coverage_counts(plan);
    for (std::size_t k = 0; k < tiles.size(); ++k)
      for (std::size_t b = 0; b < frames; ++b)
        for (std::size_t i = 0; i < plan.tile; ++i)
          for (std::size_t j = 0; j < plan.tile; ++j) out.at(b, origins[k].row + i, origins[k].col + j) += tiles[k].at(b, i, j);
    for (std::size_t b = 0; b < frames; ++b)
      for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) out.at(b, i, j) /= n.at(i, j);
  } else {
    const auto own = owners(plan);
    for (std::size_t b = 0; b < frames; ++b)
      for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) {
          const std::size_t k = own[i * plan.cols + j];
          out.at(b, i, j) = tiles[k].at(b, i - origins[k].row, j - origins[k].col);
        }
  }
  return out;
}

}  // namespace metasci
