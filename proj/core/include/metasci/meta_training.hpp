#pragma once

// Meta-training of the shared backbone (Theta_1) and meta-modulation (Theta_2).
//
// Per task: U plain gradient steps evolve Theta_2 into a task modulation on a
// pre-batch (inner loop); the adapted model's loss on a separate objective
// batch is summed over tasks and one Adam step updates (Theta_1, Theta_2).
//
// The exact meta-gradient differentiates through the inner steps. With
// phi_{u+1} = phi_u - beta * grad_phi L1(Theta_1, phi_u) and lambda = dL2/dphi_U,
// the backward sweep is
//   dL2/dTheta_1 -= beta * H_{Theta_1,phi}(phi_u) lambda
//   lambda       -= beta * H_{phi,phi}(phi_u) lambda          for u = U-1 .. 0
// where both Hessian-vector products come from one forward-over-reverse pass
// (the tape evaluated over Dual numbers with tangent lambda on phi).

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metasci/backbone.hpp"
#include "metasci/dataset.hpp"
#include "metasci/optim.hpp"
#include "metasci/parallel.hpp"

namespace metasci {

enum class LossKind {
  kMse,      // mean squared error over all elements
  kFrameL2,  // sum of unsquared per-frame L2 norms
};

enum class MetaGradientMode { kExactUnrolled, kFirstOrder };

template <class T>
struct LossGradient {
  double loss = 0.0;
  ParamSet<T> shared;  // empty unless requested
  ParamSet<T> mod;
};

/// Hessian of the loss applied to a direction that lives only in modulation space.
template <class T>
struct HessianVectorProduct {
  ParamSet<T> shared;  // H_{shared,mod} v
  ParamSet<T> mod;     // H_{mod,mod} v
};

template <class S>
ad::Var<S> batch_loss(LossKind kind, const ad::Var<S>& prediction, const ad::Var<S>& target) {
  return kind == LossKind::kMse ? ad::mse_loss(prediction, target) : ad::frame_l2_loss(prediction, target);
}

/// Loss, gradients and Hessian-vector products of the backbone on a batch.
template <class T>
class BackboneObjective {
 public:
  explicit BackboneObjective(ArchConfig arch, LossKind loss = LossKind::kMse)
      : arch_(arch), loss_(loss) {}

  const ArchConfig& arch() const noexcept { return arch_; }
  LossKind loss_kind() const noexcept { return loss_; }

  double loss(const ParamSet<T>& shared, const ParamSet<T>& mod, const Batch<T>& batch) const {
    ad::Tape<T> tape;
    const auto vars = place_on_tape(tape, shared, &mod, false, false);
    const auto out = forward(arch_, tape.constant(batch.inputs), vars);
    return primal(batch_loss(loss_, out, tape.constant(batch.targets)).value()[0]);
  }

  LossGradient<T> gradient(const ParamSet<T>& shared, const ParamSet<T>& mod, const Batch<T>& batch,
                           bool want_shared) const {
    ad::Tape<T> tape;
    const auto vars = place_on_tape(tape, shared, &mod, want_shared, true);
    const auto out = forward(arch_, tape.constant(batch.inputs), vars);
    const auto loss = batch_loss(loss_, out, tape.constant(batch.targets));
    auto grads = tape.gradients(loss, interleave(vars, want_shared));
    return split(primal(loss.value()[0]), grads, want_shared);
  }

  HessianVectorProduct<T> hvp(const ParamSet<T>& shared, const ParamSet<T>& mod, const Batch<T>& batch,
                              const ParamSet<T>& direction) const {
    using D = Dual<T>;
    ParamSet<D> dshared = param_cast<D>(shared);
    ParamSet<D> dmod = param_cast<D>(mod);
    if (direction.size() != dmod.size()) throw DimensionMismatch("hvp: direction does not match modulation");
    for (std::size_t k = 0; k < dmod.size(); ++k) {
      require_same_shape(mod[k], direction[k], "hvp");
      for (std::size_t i = 0; i < dmod[k].size(); ++i) dmod[k][i].tangent = direction[k][i];
    }
    ad::Tape<D> tape;
    const auto vars = place_on_tape(tape, dshared, &dmod, true, true);
    const auto out = forward(arch_, tape.constant(tensor_cast<D>(batch.inputs)), vars);
    const auto loss = batch_loss(loss_, out, tape.constant(tensor_cast<D>(batch.targets)));
    const auto grads = tape.gradients(loss, interleave(vars, true));
    HessianVectorProduct<T> h;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      Tensor<T> t(grads[k].shape());
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = grads[k][i].tangent;
      (k < shared.size() ? h.shared : h.mod).push_back(std::move(t));
    }
    return h;
  }

 private:
  template <class S>
  static std::vector<ad::Var<S>> interleave(const BackboneVars<S>& v, bool with_shared) {
    std::vector<ad::Var<S>> out;
    if (with_shared) {
      for (std::size_t l = 0; l < v.kernels.size(); ++l) {
        out.push_back(v.kernels[l]);
        out.push_back(v.biases[l]);
      }
    }
    for (std::size_t l = 0; l < v.alphas.size(); ++l) {
      out.push_back(v.alphas[l]);
      out.push_back(v.betas[l]);
    }
    return out;
  }

  static LossGradient<T> split(double loss, std::vector<Tensor<T>>& grads, bool with_shared) {
    LossGradient<T> g;
    g.loss = loss;
    const std::size_t n_shared = with_shared ? grads.size() / 2 : 0;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      (k < n_shared ? g.shared : g.mod).push_back(std::move(grads[k]));
    }
    return g;
  }

  ArchConfig arch_;
  LossKind loss_;
};

/// phi_0 = meta, phi_{u+1} = phi_u - step_size * grad_phi L(shared, phi_u; batch).
/// Returns phi_0 .. phi_U. `first_loss` receives L at phi_0 when steps > 0.
template <class T, class Objective, class BatchT>
std::vector<ParamSet<T>> inner_trajectory(const Objective& obj, const ParamSet<T>& shared,
                                          const ParamSet<T>& meta, const BatchT& batch, std::size_t steps,
                                          double step_size, double* first_loss = nullptr) {
  std::vector<ParamSet<T>> phis{meta};
  for (std::size_t u = 0; u < steps; ++u) {
    const LossGradient<T> g = obj.gradient(shared, phis.back(), batch, false);
    if (u == 0 && first_loss) *first_loss = g.loss;
    if (!std::isfinite(g.loss)) throw NumericFailure("inner loop: non-finite loss");
    ParamSet<T> next = phis.back();
    axpy(next, -step_size, g.mod);
    phis.push_back(std::move(next));
  }
  return phis;
}

template <class T>
struct MetaGradient {
  double inner_loss = std::numeric_limits<double>::quiet_NaN();  // L1 before adaptation
  double outer_loss = 0.0;                                        // L2 at the adapted point
  ParamSet<T> shared_grad;
  ParamSet<T> meta_grad;
  ParamSet<T> adapted;
};

/// Gradient of L2(shared, phi_U(shared, meta)) with respect to (shared, meta).
/// First-order mode treats phi_U as independent of meta and shared.
template <class T, class Objective, class BatchT>
MetaGradient<T> meta_gradient(const Objective& obj, const ParamSet<T>& shared, const ParamSet<T>& meta,
                              const BatchT& pre, const BatchT& target, std::size_t steps, double step_size,
                              MetaGradientMode mode) {
  MetaGradient<T> out;
  std::vector<ParamSet<T>> phis = inner_trajectory(obj, shared, meta, pre, steps, step_size, &out.inner_loss);
  LossGradient<T> g = obj.gradient(shared, phis.back(), target, true);
  out.outer_loss = g.loss;
  if (!std::isfinite(g.loss)) throw NumericFailure("outer loss is not finite");
  ParamSet<T> lambda = std::move(g.mod);
  out.shared_grad = std::move(g.shared);
  if (mode == MetaGradientMode::kExactUnrolled) {
    for (std::size_t u = steps; u-- > 0;) {
      const HessianVectorProduct<T> h = obj.hvp(shared, phis[u], pre, lambda);
      axpy(out.shared_grad, -step_size, h.shared);
      axpy(lambda, -step_size, h.mod);
    }
  }
  out.meta_grad = std::move(lambda);
  out.adapted = std::move(phis.back());
  return out;
}

/// U plain gradient steps on the modulation with Theta_1 fixed.
template <class T>
TaskModulation<T> inner_adapt(const BaseParams<T>& base, const Modulation<T>& meta, const Batch<T>& batch,
                              std::size_t steps, double step_size, LossKind loss = LossKind::kMse) {
  if (batch.size() == 0) throw InvalidArgument("inner_adapt: empty batch");
  const BackboneObjective<T> obj(base.arch, loss);
  auto phis = inner_trajectory(obj, base.tensors, meta.tensors, batch, steps, step_size);
  TaskModulation<T> out;
  out.params.tensors = std::move(phis.back());
  return out;
}

struct TrainConfig {
  std::size_t inner_steps = 3;  // U
  double inner_lr = 1e-5;       // beta
  AdamConfig adam;
  std::size_t epochs = 1;
  std::size_t pre_batch = 4;  // N1
  std::size_t obj_batch = 4;  // N2
  MetaGradientMode mode = MetaGradientMode::kExactUnrolled;
  LossKind loss = LossKind::kMse;
  std::size_t threads = 1;
  std::size_t max_steps = 0;  // 0 = no cap
  bool record_timing = true;  // false writes 0 seconds, for reproducible logs
  std::filesystem::path checkpoint_dir;
  std::function<void(const std::string&)> warn = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };

  void validate() const {
    if (!(inner_lr > 0.0)) throw InvalidArgument("TrainConfig: inner step size must be > 0");
    if (pre_batch == 0 || obj_batch == 0) throw InvalidArgument("TrainConfig: batch sizes must be >= 1");
    if (!(adam.lr > 0.0)) throw InvalidArgument("TrainConfig: Adam step size must be > 0");
  }
};

/// One line of the training log.
struct LogRecord {
  std::size_t epoch = 0;
  std::string task;
  double inner_loss = 0.0;
  double outer_loss = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch=" << epoch << " task=" << task << " L1=" << inner_loss << " L2=" << outer_loss
       << " grad_norm=" << grad_norm << " seconds=" << seconds;
    return os.str();
  }
};

/// Parameters plus the outer optimizer over [Theta_1..., Theta_2...].
template <class T>
struct TrainState {
  BaseParams<T> base;
  Modulation<T> meta;
  Adam<T> opt;

  TrainState(BaseParams<T> b, Modulation<T> m, const AdamConfig& cfg)
      : base(std::move(b)), meta(std::move(m)), opt(cfg, joined(base.tensors, meta.tensors)) {}

  static ParamSet<T> joined(const ParamSet<T>& a, const ParamSet<T>& b) {
    ParamSet<T> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  void apply(const ParamSet<T>& shared_grad, const ParamSet<T>& meta_grad) {
    ParamSet<T> params = joined(base.tensors, meta.tensors);
    opt.step(params, joined(shared_grad, meta_grad));
    const std::size_t n = base.tensors.size();
    for (std::size_t k = 0; k < params.size(); ++k) {
      (k < n ? base.tensors[k] : meta.tensors[k - n]) = std::move(params[k]);
    }
  }
};

struct TaskBatchIndices {
  std::vector<std::size_t> pre;
  std::vector<std::size_t> obj;
};

struct MetaStepStats {
  std::vector<double> inner_loss;  // per task
  std::vector<double> outer_loss;  // per task
  double total_loss = 0.0;         // L2 = sum over tasks
  double grad_norm = 0.0;
  bool overlapping_batches = false;
};

/// Draws the pre-batch then the objective batch from each task's stream.
inline std::vector<TaskBatchIndices> draw_batches(std::vector<IndexStream>& streams, std::size_t pre,
                                                  std::size_t obj) {
  std::vector<TaskBatchIndices> out;
  for (auto& s : streams) {
    TaskBatchIndices b;
    b.pre = s.take(pre);
    b.obj = s.take(obj);
    out.push_back(std::move(b));
  }
  return out;
}

/// Per-task index stream seeds derived from the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// One outer update: inner adaptation per task, L2 = sum_m L(Theta_1, Theta'_2m; T_obj,m),
/// then Adam on (Theta_1, Theta_2). Task contributions are reduced in task order.
template <class T>
MetaStepStats meta_step(TrainState<T>& state, const std::vector<PreparedTask<T>>& tasks,
                        const std::vector<TaskBatchIndices>& batches, const TrainConfig& cfg) {
  if (tasks.empty()) throw InvalidArgument("meta_step: no tasks");
  if (batches.size() != tasks.size()) throw InvalidArgument("meta_step: one batch pair per task required");
  const BackboneObjective<T> obj(state.base.arch, cfg.loss);
  std::vector<MetaGradient<T>> per_task(tasks.size());
  MetaStepStats stats;
  for (const auto& b : batches) {
    const std::set<std::size_t> pre(b.pre.begin(), b.pre.end());
    for (std::size_t i : b.obj) stats.overlapping_batches = stats.overlapping_batches || pre.count(i) > 0;
  }
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t m) {
    const Batch<T> pre = tasks[m].batch(batches[m].pre);
    const Batch<T> target = tasks[m].batch(batches[m].obj);
    per_task[m] = meta_gradient(obj, state.base.tensors, state.meta.tensors, pre, target, cfg.inner_steps,
                                cfg.inner_lr, cfg.mode);
  });
  ParamSet<T> shared = std::move(per_task[0].shared_grad);
  ParamSet<T> meta = std::move(per_task[0].meta_grad);
  for (std::size_t m = 1; m < per_task.size(); ++m) {
    axpy(shared, 1.0, per_task[m].shared_grad);
    axpy(meta, 1.0, per_task[m].meta_grad);
  }
  for (const auto& g : per_task) {
    stats.inner_loss.push_back(g.inner_loss);
    stats.outer_loss.push_back(g.outer_loss);
    stats.total_loss += g.outer_loss;
  }
  stats.grad_norm = std::sqrt(std::pow(l2_norm(shared), 2) + std::pow(l2_norm(meta), 2));
  if (!std::isfinite(stats.total_loss) || !all_finite(shared) || !all_finite(meta)) {
    throw NumericFailure("meta_step: non-finite loss or gradient");
  }
  state.apply(shared, meta);
  return stats;
}

/// Conventional supervised update on one batch: gradient of L(Theta_1, Theta_2) and Adam.
template <class T>
double supervised_step(TrainState<T>& state, const PreparedTask<T>& task, const std::vector<std::size_t>& indices,
                       LossKind loss) {
  const BackboneObjective<T> obj(state.base.arch, loss);
  LossGradient<T> g = obj.gradient(state.base.tensors, state.meta.tensors, task.batch(indices), true);
  if (!std::isfinite(g.loss)) throw NumericFailure("supervised_step: non-finite loss");
  state.apply(g.shared, g.mod);
  return g.loss;
}

template <class T>
struct TrainResult {
  BaseParams<T> base;
  Modulation<T> meta;
  std::vector<LogRecord> log;
  std::size_t steps = 0;
};

/// Checkpoint writer hook so this header does not depend on file formats.
template <class T>
using CheckpointWriter =
    std::function<void(const std::filesystem::path&, const BaseParams<T>&, const Modulation<T>&, std::size_t epoch)>;

/// Runs epochs of meta_step. An epoch is ceil(max task size / obj_batch) steps.
template <class T>
TrainResult<T> train(BaseParams<T> base, Modulation<T> meta, const TrainConfig& cfg,
                     const std::vector<TaskDataset>& tasks, std::uint64_t seed,
                     const CheckpointWriter<T>& write_checkpoint = {},
                     const std::function<void(const LogRecord&)>& on_log = {}) {
  cfg.validate();
  if (tasks.empty()) throw InvalidArgument("train: at least one task required");
  std::vector<PreparedTask<T>> prepared;
  std::vector<IndexStream> streams;
  std::size_t largest = 0;
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    validate_task(tasks[m]);
    prepared.push_back(prepare<T>(tasks[m]));
    streams.emplace_back(tasks[m].size(), derive_seed(seed, m));
    largest = std::max(largest, tasks[m].size());
  }
  const std::size_t steps_per_epoch = (largest + cfg.obj_batch - 1) / cfg.obj_batch;

  TrainState<T> state(std::move(base), std::move(meta), cfg.adam);
  TrainResult<T> result;
  std::filesystem::path last_good;
  bool warned = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> l1(tasks.size(), 0.0), l2(tasks.size(), 0.0);
    double norm = 0.0;
    std::size_t done = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) break;
      const auto batches = draw_batches(streams, cfg.pre_batch, cfg.obj_batch);
      MetaStepStats st;
      try {
        st = meta_step(state, prepared, batches, cfg);
      } catch (const NumericFailure& e) {
        throw NumericFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             (last_good.empty() ? std::string("; no checkpoint written yet")
                                                : "; last good checkpoint " + last_good.string()));
      }
      if (st.overlapping_batches && !warned && cfg.warn) {
        cfg.warn("pre-batch and objective batch overlap (dataset smaller than N1 + N2)");
        warned = true;
      }
      for (std::size_t m = 0; m < tasks.size(); ++m) {
        l1[m] += st.inner_loss[m];
        l2[m] += st.outer_loss[m];
      }
      norm += st.grad_norm;
      ++done;
      ++result.steps;
    }
    if (done == 0) break;
    const double seconds =
        cfg.record_timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    for (std::size_t m = 0; m < tasks.size(); ++m) {
      LogRecord r{epoch, tasks[m].id, l1[m] / done, l2[m] / done, norm / done, seconds};
      if (on_log) on_log(r);
      result.log.push_back(std::move(r));
    }
    if (!cfg.checkpoint_dir.empty() && write_checkpoint) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      last_good = cfg.checkpoint_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".msci");
      write_checkpoint(last_good, state.base, state.meta, epoch);
    }
  }
  result.base = std::move(state.base);
  result.meta = std::move(state.meta);
  return result;
}

/// Fresh parameters from `seed`, then train.
template <class T>
TrainResult<T> train(const ArchConfig& arch, const TrainConfig& cfg, const std::vector<TaskDataset>& tasks,
                     std::uint64_t seed, const CheckpointWriter<T>& write_checkpoint = {},
                     const std::function<void(const LogRecord&)>& on_log = {}) {
  auto [base, meta] = init_params<T>(arch, seed);
  return train<T>(std::move(base), std::move(meta), cfg, tasks, seed, write_checkpoint, on_log);
}

/// Conventional single-task training with the same batch order as train():
/// each step draws (pre, obj) and updates on obj only.
template <class T>
TrainResult<T> train_supervised(BaseParams<T> base, Modulation<T> meta, const TrainConfig& cfg,
                                const TaskDataset& task, std::uint64_t seed) {
  cfg.validate();
  const PreparedTask<T> prepared = prepare<T>(task);
  std::vector<IndexStream> streams;
  streams.emplace_back(task.size(), derive_seed(seed, 0));
  const std::size_t steps_per_epoch = (task.size() + cfg.obj_batch - 1) / cfg.obj_batch;
  TrainState<T> state(std::move(base), std::move(meta), cfg.adam);
  TrainResult<T> result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) break;
      const auto batches = draw_batches(streams, cfg.pre_batch, cfg.obj_batch);
      supervised_step(state, prepared, batches[0].obj, cfg.loss);
      ++result.steps;
    }
  }
  result.base = std::move(state.base);
  result.meta = std::move(state.meta);
  return result;
}

}  // namespace metasci
