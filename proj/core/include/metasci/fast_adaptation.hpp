#pragma once

// Adaptation of the modulation to new mask sets with the backbone frozen, and
// the end-to-end reconstruction entry point.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "metasci/meta_training.hpp"

namespace metasci {

struct AdaptConfig {
  std::size_t epochs = 4;
  std::size_t batch = 4;  // N2
  AdamConfig adam;
  LossKind loss = LossKind::kMse;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  bool record_timing = true;

  void validate() const {
    if (batch == 0) throw InvalidArgument("AdaptConfig: batch must be >= 1");
    if (!(adam.lr > 0.0)) throw InvalidArgument("AdaptConfig: Adam step size must be > 0");
  }
};

template <class T>
struct AdaptedTask {
  TaskModulation<T> modulation;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::size_t steps = 0;
  double seconds = 0.0;
};

/// Adam on a private copy of `meta` using only this task's samples.
/// The batch order depends on cfg.seed and the task's mask seed only.
template <class T>
AdaptedTask<T> adapt_task(const BaseParams<T>& base, const Modulation<T>& meta, const TaskDataset& task,
                          const AdaptConfig& cfg) {
  cfg.validate();
  validate_task(task);
  const auto t0 = std::chrono::steady_clock::now();
  AdaptedTask<T> out;
  out.modulation.task = task.id;
  out.modulation.mask_seed = task.masks.seed();
  out.modulation.mask_hash = task.masks.hash();
  out.modulation.params = meta;
  if (cfg.epochs > 0) {
    const PreparedTask<T> prepared = prepare<T>(task);
    const BackboneObjective<T> obj(base.arch, cfg.loss);
    IndexStream stream(task.size(), derive_seed(cfg.seed, task.masks.seed()));
    Adam<T> opt(cfg.adam, meta.tensors);
    const std::size_t steps_per_epoch = (task.size() + cfg.batch - 1) / cfg.batch;
    ParamSet<T>& phi = out.modulation.params.tensors;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      double sum = 0.0;
      for (std::size_t s = 0; s < steps_per_epoch; ++s) {
        const LossGradient<T> g = obj.gradient(base.tensors, phi, prepared.batch(stream.take(cfg.batch)), false);
        if (!std::isfinite(g.loss) || !all_finite(g.mod)) {
          throw NumericFailure("adaptation of task " + task.id + ": non-finite loss or gradient");
        }
        opt.step(phi, g.mod);
        sum += g.loss;
        ++out.steps;
      }
      out.epoch_loss.push_back(sum / static_cast<double>(steps_per_epoch));
    }
  }
  if (cfg.record_timing) out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Each task starts from `meta`; tasks are independent and run in parallel.
template <class T>
std::vector<AdaptedTask<T>> adapt_detailed(const BaseParams<T>& base, const Modulation<T>& meta,
                                           const std::vector<TaskDataset>& tasks, const AdaptConfig& cfg) {
  if (tasks.empty()) throw InvalidArgument("adapt: empty task list");
  std::vector<AdaptedTask<T>> out(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t m) { out[m] = adapt_task(base, meta, tasks[m], cfg); });
  return out;
}

template <class T>
std::vector<TaskModulation<T>> adapt(const BaseParams<T>& base, const Modulation<T>& meta,
                                     const std::vector<TaskDataset>& tasks, const AdaptConfig& cfg) {
  std::vector<TaskModulation<T>> out;
  for (auto& a : adapt_detailed(base, meta, tasks, cfg)) out.push_back(std::move(a.modulation));
  return out;
}

/// Parameter storage for one shared backbone plus per-task modulations.
struct Footprint {
  std::size_t shared = 0;    // |Theta_1|
  std::size_t per_task = 0;  // sum of task modulation sizes
  std::size_t tasks = 0;
  std::size_t total() const noexcept { return shared + per_task; }
};

template <class T>
Footprint footprint(const BaseParams<T>& base, const std::vector<TaskModulation<T>>& mods) {
  Footprint f{base.parameter_count(), 0, mods.size()};
  for (const auto& m : mods) f.per_task += m.params.parameter_count();
  return f;
}

/// normalize -> fuse -> backbone -> clamp to [0, 1]. A modulation with
/// mask_hash 0 is not bound to a mask set (e.g. the meta-modulation itself).
template <class T>
VideoBlock reconstruct(const Measurement& y, const MaskSet& masks, const BaseParams<T>& base,
                       const TaskModulation<T>& mod) {
  if (y.rows() != masks.rows() || y.cols() != masks.cols()) {
    throw DimensionMismatch("reconstruct: measurement " + shape_string(y.values.shape()) + " vs masks " +
                            std::to_string(masks.rows()) + "x" + std::to_string(masks.cols()));
  }
  if (masks.frames() != base.arch.frames) throw DimensionMismatch("reconstruct: mask frame count differs from arch");
  if (mod.mask_hash != 0 && mod.mask_hash != masks.hash()) {
    throw PreconditionViolation("reconstruct: modulation for task " + mod.task + " was adapted to other masks");
  }
  const Tensor<T> input = to_network<T>(network_input(y, masks));
  return hwc_to_video(forward(input, base, &mod.params), true);
}

/// Modulation not bound to any mask set.
template <class T>
TaskModulation<T> unbound(const Modulation<T>& m, std::string name = "meta") {
  TaskModulation<T> t;
  t.task = std::move(name);
  t.params = m;
  return t;
}

}  // namespace metasci
