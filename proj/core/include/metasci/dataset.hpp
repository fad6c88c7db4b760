#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metasci/sci_forward.hpp"

namespace metasci {

struct Sample {
  Measurement measurement;
  VideoBlock video;
};

/// One encoding system (mask set) and its paired measurement / ground-truth samples.
struct TaskDataset {
  std::string id;
  MaskSet masks;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Re-encodes the first `check_samples` samples under the task's masks and
/// throws PreconditionViolation if any measurement disagrees.
void validate_task(const TaskDataset& task, std::size_t check_samples = 1);

struct ShapesOptions {
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 4;
  /// Shape count grows with area relative to this reference tile.
  std::size_t reference_area = 64 * 64;
  double max_speed = 2.0;  // pixels per frame
  double min_size = 6.0;
  double max_size = 20.0;
};

/// Synthetic scene: smooth background plus textured rectangles and disks moving
/// linearly across the frames. Values in [0, 1].
VideoBlock moving_shapes(std::size_t frames, std::size_t rows, std::size_t cols, std::uint64_t seed,
                         const ShapesOptions& opts = {});

/// `count` moving-shapes videos encoded noiselessly under `masks`.
TaskDataset make_synthetic_task(std::string id, MaskSet masks, std::size_t count, std::uint64_t seed,
                                const ShapesOptions& opts = {});

/// Cycles through shuffled permutations of [0, n); reshuffles on exhaustion.
class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed);
  std::vector<std::size_t> take(std::size_t k);

 private:
  void reshuffle();

  std::size_t n_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Stacked network inputs [N, H, W, B+1] and targets [N, H, W, B].
template <class T>
struct Batch {
  Tensor<T> inputs;
  Tensor<T> targets;
  std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
};

/// Network-ready tensors for every sample of a task, computed once.
template <class T>
struct PreparedTask {
  std::vector<Tensor<T>> inputs;   // HWC, B+1 channels
  std::vector<Tensor<T>> targets;  // HWC, B channels

  std::size_t size() const noexcept { return inputs.size(); }

  Batch<T> batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw InvalidArgument("empty batch");
    const Shape& is = inputs.at(indices[0]).shape();
    const Shape& ts = targets.at(indices[0]).shape();
    Batch<T> b{Tensor<T>({indices.size(), is[0], is[1], is[2]}),
               Tensor<T>({indices.size(), ts[0], ts[1], ts[2]})};
    const std::size_t ni = shape_size(is), nt = shape_size(ts);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const Tensor<T>& in = inputs.at(indices[k]);
      const Tensor<T>& tg = targets.at(indices[k]);
      if (in.shape() != is || tg.shape() != ts) throw DimensionMismatch("batch samples differ in shape");
      std::copy(in.storage().begin(), in.storage().end(), b.inputs.data() + k * ni);
      std::copy(tg.storage().begin(), tg.storage().end(), b.targets.data() + k * nt);
    }
    return b;
  }
};

/// Fused network input of one measurement under its masks.
inline FusedInput network_input(const Measurement& y, const MaskSet& masks) {
  return fuse_input(normalize_measurement(y, masks), masks);
}

template <class T>
PreparedTask<T> prepare(const TaskDataset& task) {
  PreparedTask<T> p;
  for (const Sample& s : task.samples) {
    p.inputs.push_back(to_network<T>(network_input(s.measurement, task.masks)));
    p.targets.push_back(video_to_hwc<T>(s.video));
  }
  return p;
}

}  // namespace metasci
