#include "metasci/backbone.hpp"

#include <cmath>

namespace metasci {

std::size_t scaled_channels(std::size_t base, double scale) {
  const double v = static_cast<double>(base) * scale;
  const double r = std::round(v);
  if (!(scale > 0.0) || r < 1.0 || std::abs(v - r) > 1e-9) {
    throw InvalidArgument("width_scale " + std::to_string(scale) + " gives non-integral channel count for " +
                          std::to_string(base));
  }
  return static_cast<std::size_t>(r);
}

void ArchConfig::validate() const {
  if (frames == 0) throw InvalidArgument("ArchConfig: frames must be >= 1");
  if (!(leaky_slope >= 0.0)) throw InvalidArgument("ArchConfig: leaky_slope must be >= 0");
  for (std::size_t base : {16u, 32u, 64u, 128u}) scaled_channels(base, width_scale);
}

std::vector<LayerSpec> layer_specs(const ArchConfig& arch) {
  arch.validate();
  const auto ch = [&](std::size_t base) { return scaled_channels(base, arch.width_scale); };
  const std::size_t c16 = ch(16), c32 = ch(32), c64 = ch(64), c128 = ch(128);
  const auto conv = [](std::size_t k, std::size_t in, std::size_t out, std::size_t stride = 1) {
    return LayerSpec{LayerKind::kConv, k, in, out, stride, true, false, false};
  };
  std::vector<LayerSpec> s;
  s.push_back(conv(5, arch.frames + 1, c32));
  s.push_back(conv(3, c32, c64));
  s.push_back(conv(1, c64, c64));
  s.push_back(conv(3, c64, c128, 2));
  for (std::size_t r = 0; r < arch.res_blocks; ++r) {
    LayerSpec first = conv(3, c128, c128);
    first.saves_skip = true;
    s.push_back(first);
    s.push_back(conv(1, c128, c128));
    s.push_back(conv(3, c128, c128));
    LayerSpec fourth = conv(3, c128, c128);
    fourth.adds_skip = true;
    s.push_back(fourth);
    s.push_back(conv(3, c128, c128));
    s.push_back(conv(1, c128, c128));
  }
  s.push_back(LayerSpec{LayerKind::kTransposedConv, 3, c128, c64, 2, true, false, false});
  s.push_back(conv(3, c64, c32));
  s.push_back(conv(1, c32, c16));
  LayerSpec last = conv(3, c16, arch.frames);
  last.activation = false;
  s.push_back(last);
  return s;
}

ModulationCounts count_modulation_params(const ArchConfig& arch) {
  ModulationCounts c;
  for (const LayerSpec& s : layer_specs(arch)) {
    c.rank1 += s.in_channels + s.out_channels;
    c.full += s.in_channels * s.out_channels;
  }
  return c;
}

}  // namespace metasci
