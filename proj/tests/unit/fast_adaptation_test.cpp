#include <gtest/gtest.h>

#include "metasci/fast_adaptation.hpp"
#include "test_util.hpp"

namespace metasci {
namespace {

const ArchConfig kArch{2, 0.125, 0, 0.2};

std::vector<TaskDataset> tasks(std::size_t n) {
  std::vector<TaskDataset> out;
  for (std::size_t m = 0; m < n; ++m) {
    out.push_back(make_synthetic_task("new" + std::to_string(m), generate_masks(2, 8, 8, 0.5, 50 + m), 4, 60 + m));
  }
  return out;
}

AdaptConfig config() {
  AdaptConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 2;
  cfg.adam.lr = 1e-2;
  cfg.record_timing = false;
  cfg.seed = 4;
  return cfg;
}

TEST(Adapt, ZeroEpochsReturnsMeta) {
  const auto [base, meta] = init_params<double>(kArch, 1);
  AdaptConfig cfg = config();
  cfg.epochs = 0;
  const auto a = adapt_task(base, meta, tasks(1)[0], cfg);
  EXPECT_EQ(a.modulation.params, meta);
  EXPECT_EQ(a.steps, 0u);
  EXPECT_EQ(a.modulation.task, "new0");
  EXPECT_EQ(a.modulation.mask_hash, tasks(1)[0].masks.hash());
}

TEST(Adapt, BackboneBitUnchangedAndLossFalls) {
  const auto [base, meta] = init_params<double>(kArch, 2);
  const BaseParams<double> before = base;
  AdaptConfig cfg = config();
  cfg.epochs = 20;
  const auto a = adapt_task(base, meta, tasks(1)[0], cfg);
  EXPECT_EQ(base, before);
  EXPECT_EQ(a.steps, 40u);
  ASSERT_EQ(a.epoch_loss.size(), 20u);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
}

TEST(Adapt, TasksAreIndependent) {
  const auto [base, meta] = init_params<double>(kArch, 3);
  const auto all = tasks(3);
  AdaptConfig cfg = config();
  cfg.threads = 3;
  const auto together = adapt(base, meta, all, cfg);
  const auto alone = adapt(base, meta, std::vector<TaskDataset>{all[2]}, config());
  EXPECT_EQ(together[2].params, alone[0].params);
  // Reordering the list changes nothing either.
  const auto reversed = adapt(base, meta, std::vector<TaskDataset>{all[2], all[1], all[0]}, config());
  EXPECT_EQ(reversed[0].params, together[2].params);
  EXPECT_EQ(reversed[2].params, together[0].params);
  EXPECT_NE(together[0].params, together[1].params);
}

TEST(Adapt, RejectsEmptyAndBadConfig) {
  const auto [base, meta] = init_params<double>(kArch, 3);
  EXPECT_THROW(adapt(base, meta, {}, config()), InvalidArgument);
  AdaptConfig cfg = config();
  cfg.batch = 0;
  EXPECT_THROW(adapt_task(base, meta, tasks(1)[0], cfg), InvalidArgument);
}

TEST(Footprint, SharedPlusPerTask) {
  const ArchConfig arch{8, 1.0, 3, 0.2};
  const auto [base, meta] = init_params<float>(arch, 1);
  std::vector<TaskModulation<float>> mods(5, unbound(meta));
  const Footprint f = footprint(base, mods);
  EXPECT_EQ(f.per_task, 5 * count_modulation_params(arch).rank1);
  EXPECT_EQ(f.tasks, 5u);
  EXPECT_EQ(f.total(), base.parameter_count() + 5 * 5425u);
  // One extra task costs the modulation only, a small fraction of a backbone copy.
  EXPECT_LT(5425.0 / static_cast<double>(base.parameter_count()), 0.01);
}

TEST(Reconstruct, ShapeRangeAndDeterminism) {
  const auto [base, meta] = init_params<double>(kArch, 5);
  const TaskDataset t = tasks(1)[0];
  const auto a = reconstruct(t.samples[0].measurement, t.masks, base, unbound(meta));
  EXPECT_EQ(a.frames(), 2u);
  EXPECT_EQ(a.rows(), 8u);
  for (double v : a.tensor().storage()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a, reconstruct(t.samples[0].measurement, t.masks, base, unbound(meta)));
}

TEST(Reconstruct, MatchesManualPipeline) {
  const auto [base, meta] = init_params<double>(kArch, 6);
  const TaskDataset t = tasks(1)[0];
  const Measurement& y = t.samples[1].measurement;
  const auto got = reconstruct(y, t.masks, base, unbound(meta));
  const Image ybar = normalize_measurement(y, t.masks);
  Tensor<double> in({8, 8, 3});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      in.at(i, j, 0) = ybar.at(i, j);
      for (std::size_t b = 0; b < 2; ++b) in.at(i, j, b + 1) = ybar.at(i, j) * t.masks.at(b, i, j);
    }
  const auto out = forward(in, base, static_cast<const Modulation<double>*>(nullptr));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(got.at(b, i, j), std::clamp(out.at(i, j, b), 0.0, 1.0));
}

TEST(Reconstruct, RejectsForeignModulation) {
  const auto [base, meta] = init_params<double>(kArch, 7);
  const auto all = tasks(2);
  const auto mods = adapt(base, meta, all, config());
  EXPECT_NO_THROW(reconstruct(all[0].samples[0].measurement, all[0].masks, base, mods[0]));
  EXPECT_THROW(reconstruct(all[1].samples[0].measurement, all[1].masks, base, mods[0]), PreconditionViolation);
  const MaskSet wrong = generate_masks(3, 8, 8, 0.5, 1);
  EXPECT_THROW(reconstruct(encode(VideoBlock(3, 8, 8), wrong), wrong, base, unbound(meta)), DimensionMismatch);
}

}  // namespace
}  // namespace metasci
