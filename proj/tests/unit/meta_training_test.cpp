#include <gtest/gtest.h>

#include <cmath>

#include "metasci/meta_training.hpp"
#include "test_util.hpp"

namespace metasci {
namespace {

using testing::inner;
using testing::random_tensor;

// L(theta, phi) = a/2 (phi - t)^2 + c theta phi, one scalar each.
struct QuadBatch {
  double target = 0.0;
  double coupling = 0.0;
};

struct QuadObjective {
  double a = 2.0;

  LossGradient<double> gradient(const ParamSet<double>& shared, const ParamSet<double>& mod, const QuadBatch& b,
                                bool want_shared) const {
    const double th = shared[0][0], phi = mod[0][0];
    LossGradient<double> g;
    g.loss = 0.5 * a * (phi - b.target) * (phi - b.target) + b.coupling * th * phi;
    g.mod.push_back(Tensor<double>({1}, a * (phi - b.target) + b.coupling * th));
    if (want_shared) g.shared.push_back(Tensor<double>({1}, b.coupling * phi));
    return g;
  }

  HessianVectorProduct<double> hvp(const ParamSet<double>&, const ParamSet<double>&, const QuadBatch& b,
                                   const ParamSet<double>& v) const {
    return {{Tensor<double>({1}, b.coupling * v[0][0])}, {Tensor<double>({1}, a * v[0][0])}};
  }
};

ParamSet<double> scalar(double v) { return {Tensor<double>({1}, v)}; }

TEST(InnerLoop, OneStepOnSquaredError) {
  // (phi - 1)^2 from phi = 0 with step 0.1: phi_1 = 0 - 0.1 * 2 * (0 - 1) = 0.2.
  const auto phis = inner_trajectory<double>(QuadObjective{2.0}, scalar(0), scalar(0), QuadBatch{1.0, 0.0}, 1, 0.1);
  ASSERT_EQ(phis.size(), 2u);
  EXPECT_DOUBLE_EQ(phis[1][0][0], 0.2);
}

TEST(InnerLoop, ZeroStepsReturnsMetaUnchanged) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  auto [base, meta] = init_params<double>(arch, 1);
  for (auto& t : meta.tensors) t = random_tensor<double>(t.shape(), t.size(), 0.5, 1.5);
  const TaskDataset task = make_synthetic_task("t", generate_masks(2, 8, 8, 0.5, 3), 2, 4);
  const Batch<double> b = prepare<double>(task).batch(std::vector<std::size_t>{0, 1});
  EXPECT_EQ(inner_adapt(base, meta, b, 0, 0.5).params, meta);
}

TEST(InnerLoop, EmptyBatchRejected) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto [base, meta] = init_params<double>(arch, 1);
  EXPECT_THROW(inner_adapt(base, meta, Batch<double>{}, 1, 0.1), InvalidArgument);
}

TEST(InnerLoop, SharedWeightsUntouched) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto [base, meta] = init_params<double>(arch, 1);
  const BaseParams<double> before = base;
  const TaskDataset task = make_synthetic_task("t", generate_masks(2, 8, 8, 0.5, 3), 2, 4);
  const auto adapted = inner_adapt(base, meta, prepare<double>(task).batch(std::vector<std::size_t>{0, 1}), 3, 0.5);
  EXPECT_EQ(base, before);
  EXPECT_NE(adapted.params, meta);
}

// Hand-unrolled chain rule on the scalar quadratic family.
TEST(MetaGradient, ClosedFormOnQuadratic) {
  const QuadObjective obj{1.5};
  const QuadBatch pre{0.7, 0.3}, post{-0.2, 0.9};
  const double th = 0.4, phi0 = 1.1, beta = 0.2;
  for (std::size_t u_steps : {0u, 1u, 2u, 5u}) {
    const double r = 1.0 - beta * obj.a;
    double phi = phi0, dphi_dth = 0.0;
    for (std::size_t u = 0; u < u_steps; ++u) {
      phi = r * phi + beta * obj.a * pre.target - beta * pre.coupling * th;
      dphi_dth = r * dphi_dth - beta * pre.coupling;
    }
    const double g_phi = obj.a * (phi - post.target) + post.coupling * th;
    const double want_meta = std::pow(r, static_cast<double>(u_steps)) * g_phi;
    const double want_shared = post.coupling * phi + g_phi * dphi_dth;

    const auto exact = meta_gradient<double>(obj, scalar(th), scalar(phi0), pre, post, u_steps, beta,
                                             MetaGradientMode::kExactUnrolled);
    EXPECT_NEAR(exact.meta_grad[0][0], want_meta, 1e-14) << u_steps;
    EXPECT_NEAR(exact.shared_grad[0][0], want_shared, 1e-14) << u_steps;
    EXPECT_NEAR(exact.adapted[0][0], phi, 1e-14);

    const auto fo = meta_gradient<double>(obj, scalar(th), scalar(phi0), pre, post, u_steps, beta,
                                          MetaGradientMode::kFirstOrder);
    EXPECT_NEAR(fo.meta_grad[0][0], g_phi, 1e-14);
    EXPECT_NEAR(fo.shared_grad[0][0], post.coupling * phi, 1e-14);
  }
}

struct TinySetup {
  ArchConfig arch{2, 0.125, 1, 0.2};
  BaseParams<double> base;
  Modulation<double> meta;
  Batch<double> pre, post;

  TinySetup() {
    auto p = init_params<double>(arch, 21);
    base = std::move(p.first);
    meta = std::move(p.second);
    for (auto& t : meta.tensors) t = random_tensor<double>(t.shape(), 40 + t.size(), 0.7, 1.3);
    const TaskDataset task = make_synthetic_task("t", generate_masks(2, 8, 8, 0.5, 5), 4, 6);
    const PreparedTask<double> prep = prepare<double>(task);
    pre = prep.batch(std::vector<std::size_t>{0, 1});
    post = prep.batch(std::vector<std::size_t>{2, 3});
  }

  // L2(shared, phi_U(shared, meta)) evaluated by unrolling plain gradient steps.
  double unrolled(const ParamSet<double>& shared, const ParamSet<double>& m, std::size_t steps, double beta) const {
    const BackboneObjective<double> obj(arch);
    auto phi = m;
    for (std::size_t u = 0; u < steps; ++u) axpy(phi, -beta, obj.gradient(shared, phi, pre, false).mod);
    return obj.loss(shared, phi, post);
  }
};

double dot_sets(const ParamSet<double>& a, const ParamSet<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += inner(a[k], b[k]);
  return s;
}

ParamSet<double> random_like(const ParamSet<double>& p, std::uint64_t seed) {
  ParamSet<double> out;
  for (const auto& t : p) out.push_back(random_tensor<double>(t.shape(), seed++));
  return out;
}

// Exact meta-gradient against central differences of the unrolled objective.
TEST(MetaGradient, ExactMatchesFiniteDifferencesOfUnrolledLoss) {
  const TinySetup s;
  const BackboneObjective<double> obj(s.arch);
  const std::size_t steps = 2;
  const double beta = 0.05;
  const auto g = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, steps, beta,
                                       MetaGradientMode::kExactUnrolled);
  const auto fo = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, steps, beta,
                                        MetaGradientMode::kFirstOrder);
  const double h = 1e-6;

  const auto dm = random_like(s.meta.tensors, 500);
  auto mp = s.meta.tensors, mm = s.meta.tensors;
  axpy(mp, h, dm);
  axpy(mm, -h, dm);
  const double fd_meta = (s.unrolled(s.base.tensors, mp, steps, beta) - s.unrolled(s.base.tensors, mm, steps, beta)) / (2 * h);
  EXPECT_NEAR(dot_sets(g.meta_grad, dm), fd_meta, 1e-6 * std::max(1.0, std::abs(fd_meta)));

  const auto ds = random_like(s.base.tensors, 900);
  auto sp = s.base.tensors, sm = s.base.tensors;
  axpy(sp, h, ds);
  axpy(sm, -h, ds);
  const double fd_shared = (s.unrolled(sp, s.meta.tensors, steps, beta) - s.unrolled(sm, s.meta.tensors, steps, beta)) / (2 * h);
  EXPECT_NEAR(dot_sets(g.shared_grad, ds), fd_shared, 1e-6 * std::max(1.0, std::abs(fd_shared)));

  // The second-order terms are visible at this step size, so first-order misses them.
  EXPECT_GT(std::abs(dot_sets(fo.meta_grad, dm) - fd_meta), 1e-4 * std::abs(fd_meta));
  EXPECT_NEAR(g.outer_loss, s.unrolled(s.base.tensors, s.meta.tensors, steps, beta), 1e-14);
}

TEST(MetaGradient, ModesAgreeWithoutInnerSteps) {
  const TinySetup s;
  const BackboneObjective<double> obj(s.arch);
  const auto a = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, 0, 0.1,
                                       MetaGradientMode::kExactUnrolled);
  const auto b = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, 0, 0.1,
                                       MetaGradientMode::kFirstOrder);
  EXPECT_EQ(a.meta_grad, b.meta_grad);
  EXPECT_EQ(a.shared_grad, b.shared_grad);
  const auto plain = obj.gradient(s.base.tensors, s.meta.tensors, s.post, true);
  EXPECT_EQ(a.meta_grad, plain.mod);
  EXPECT_EQ(a.shared_grad, plain.shared);
}

// Exact minus first-order is linear in the inner step size to leading order:
// halving beta halves the gap up to an O(beta^2) remainder.
TEST(MetaGradient, ModeGapShrinksLinearlyWithStepSize) {
  const TinySetup s;
  const BackboneObjective<double> obj(s.arch);
  auto gap = [&](double beta) {
    const auto e = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, 3, beta,
                                         MetaGradientMode::kExactUnrolled);
    const auto f = meta_gradient<double>(obj, s.base.tensors, s.meta.tensors, s.pre, s.post, 3, beta,
                                         MetaGradientMode::kFirstOrder);
    auto d = e.meta_grad;
    axpy(d, -1.0, f.meta_grad);
    return d;
  };
  // r(b) = |gap(b) - 2 gap(b/2)| / |gap(b)| is O(b); halving b halves it.
  auto remainder = [&](double b) {
    auto r = gap(b);
    const double n = l2_norm(r);
    axpy(r, -2.0, gap(b / 2));
    return l2_norm(r) / n;
  };
  const double r1 = remainder(1e-3), r2 = remainder(5e-4);
  EXPECT_LT(r1, 0.1);
  EXPECT_LT(r2, 0.8 * r1);
}

// On the scalar quadratic the gap is (r^U - 1) g with r = 1 - beta a, so gap / beta -> -U a g.
TEST(MetaGradient, ModeGapLeadingTermOnQuadratic) {
  const QuadObjective obj{1.5};
  const QuadBatch pre{0.7, 0.3}, post{-0.2, 0.9};
  for (double beta : {1e-2, 1e-3, 1e-4}) {
    const auto e = meta_gradient<double>(obj, scalar(0.4), scalar(1.1), pre, post, 3, beta,
                                         MetaGradientMode::kExactUnrolled);
    const auto f = meta_gradient<double>(obj, scalar(0.4), scalar(1.1), pre, post, 3, beta,
                                         MetaGradientMode::kFirstOrder);
    const double leading = -3.0 * obj.a * f.meta_grad[0][0];
    const double gap = e.meta_grad[0][0] - f.meta_grad[0][0];
    EXPECT_NEAR(gap / beta, leading, 4.0 * obj.a * obj.a * std::abs(f.meta_grad[0][0]) * beta) << beta;
  }
}

TEST(MetaGradient, HvpMatchesGradientDifferences) {
  const TinySetup s;
  const BackboneObjective<double> obj(s.arch);
  const auto v = random_like(s.meta.tensors, 77);
  const auto h = obj.hvp(s.base.tensors, s.meta.tensors, s.pre, v);
  const double eps = 1e-6;
  auto mp = s.meta.tensors, mm = s.meta.tensors;
  axpy(mp, eps, v);
  axpy(mm, -eps, v);
  const auto gp = obj.gradient(s.base.tensors, mp, s.pre, true);
  const auto gm = obj.gradient(s.base.tensors, mm, s.pre, true);
  auto fd_mod = gp.mod;
  axpy(fd_mod, -1.0, gm.mod);
  auto fd_shared = gp.shared;
  axpy(fd_shared, -1.0, gm.shared);
  for (std::size_t k = 0; k < fd_mod.size(); ++k) {
    for (std::size_t i = 0; i < fd_mod[k].size(); ++i) EXPECT_NEAR(h.mod[k][i], fd_mod[k][i] / (2 * eps), 1e-5);
  }
  for (std::size_t k = 0; k < fd_shared.size(); ++k) {
    for (std::size_t i = 0; i < fd_shared[k].size(); ++i) EXPECT_NEAR(h.shared[k][i], fd_shared[k][i] / (2 * eps), 1e-5);
  }
}

std::vector<TaskDataset> small_tasks(std::size_t n, std::size_t samples) {
  std::vector<TaskDataset> out;
  for (std::size_t m = 0; m < n; ++m) {
    out.push_back(make_synthetic_task("task" + std::to_string(m), generate_masks(2, 8, 8, 0.5, 10 + m), samples, 20 + m));
  }
  return out;
}

TrainConfig quiet_config() {
  TrainConfig cfg;
  cfg.inner_steps = 2;
  cfg.inner_lr = 1e-2;
  cfg.pre_batch = 2;
  cfg.obj_batch = 2;
  cfg.epochs = 2;
  cfg.record_timing = false;
  cfg.warn = nullptr;
  return cfg;
}

TEST(Train, LogIsDeterministicAcrossRunsAndThreads) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto tasks = small_tasks(3, 4);
  TrainConfig cfg = quiet_config();
  const auto a = train<double>(arch, cfg, tasks, 5);
  cfg.threads = 3;
  const auto b = train<double>(arch, cfg, tasks, 5);
  ASSERT_EQ(a.log.size(), 6u);
  EXPECT_EQ(a.steps, 4u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].to_string(), b.log[i].to_string());
  EXPECT_EQ(a.base, b.base);
  EXPECT_EQ(a.meta, b.meta);
  EXPECT_NE(train<double>(arch, cfg, tasks, 6).base, a.base);
}

TEST(Train, NoInnerStepsEqualsSupervisedTraining) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto tasks = small_tasks(1, 6);
  TrainConfig cfg = quiet_config();
  cfg.inner_steps = 0;
  const auto [base, meta] = init_params<float>(arch, 8);
  const auto meta_run = train<float>(base, meta, cfg, tasks, 9);
  const auto sup = train_supervised<float>(base, meta, cfg, tasks[0], 9);
  EXPECT_EQ(meta_run.steps, sup.steps);
  EXPECT_EQ(meta_run.base, sup.base);
  EXPECT_EQ(meta_run.meta, sup.meta);
}

TEST(Train, LossDecreasesOnFixedTasks) {
  const ArchConfig arch{2, 0.25, 0, 0.2};
  const auto tasks = small_tasks(2, 4);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 30;
  cfg.adam.lr = 3e-3;
  const auto r = train<double>(arch, cfg, tasks, 2);
  EXPECT_LT(r.log.back().outer_loss, 0.5 * r.log.front().outer_loss);
}

TEST(Train, OverlapWarningFiresOnce) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto tasks = small_tasks(2, 3);
  TrainConfig cfg = quiet_config();
  int warnings = 0;
  cfg.warn = [&](const std::string&) { ++warnings; };
  train<double>(arch, cfg, tasks, 1);
  EXPECT_EQ(warnings, 1);
}

TEST(Train, CheckpointsPerEpochAndMaxSteps) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto tasks = small_tasks(1, 4);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 5;
  cfg.max_steps = 5;
  cfg.checkpoint_dir = std::filesystem::temp_directory_path() / "metasci_ckpt_test";
  std::vector<std::size_t> epochs;
  const auto r = train<double>(arch, cfg, tasks, 1,
                               [&](const std::filesystem::path& p, const BaseParams<double>&, const Modulation<double>&,
                                   std::size_t e) {
                                 EXPECT_EQ(p.filename(), "checkpoint_epoch" + std::to_string(e) + ".msci");
                                 epochs.push_back(e);
                               });
  EXPECT_EQ(r.steps, 5u);
  EXPECT_EQ(epochs, (std::vector<std::size_t>{1, 2, 3}));
  std::filesystem::remove_all(cfg.checkpoint_dir);
}

TEST(Train, DivergenceNamesLastCheckpoint) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  const auto tasks = small_tasks(1, 4);
  TrainConfig cfg = quiet_config();
  cfg.epochs = 50;
  cfg.adam.lr = 1e36;
  cfg.checkpoint_dir = std::filesystem::temp_directory_path() / "metasci_nan_test";
  try {
    train<float>(arch, cfg, tasks, 1, [](auto&&...) {});
    FAIL() << "expected divergence";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint"), std::string::npos) << e.what();
  }
  std::filesystem::remove_all(cfg.checkpoint_dir);
}

TEST(Train, NonFiniteWeightsRejected) {
  const ArchConfig arch{2, 0.125, 0, 0.2};
  auto [base, meta] = init_params<double>(arch, 1);
  base.kernel(0)[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train<double>(base, meta, quiet_config(), small_tasks(1, 4), 1), NumericFailure);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.inner_lr = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.obj_batch = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_THROW(train<double>(ArchConfig{2, 0.125, 0, 0.2}, TrainConfig{}, {}, 1), InvalidArgument);
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

}  // namespace
}  // namespace metasci
