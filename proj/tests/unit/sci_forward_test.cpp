#include <gtest/gtest.h>

#include <filesystem>

#include "metasci/dataset.hpp"
#include "metasci/pgm.hpp"
#include "metasci/sci_forward.hpp"
#include "test_util.hpp"

namespace metasci {
namespace {

using testing::random_video;

TEST(Masks, DeterministicForSeed) {
  EXPECT_EQ(generate_masks(4, 16, 16, 0.5, 11), generate_masks(4, 16, 16, 0.5, 11));
  EXPECT_NE(generate_masks(4, 16, 16, 0.5, 11).values(), generate_masks(4, 16, 16, 0.5, 12).values());
}

TEST(Masks, EveryPixelCovered) {
  for (double p : {0.05, 0.2, 0.5, 1.0}) {
    const MaskSet m = generate_masks(3, 20, 20, p, 5);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j) EXPECT_GE(m.coverage(i, j), 1u);
  }
}

TEST(Masks, DensityNearTarget) {
  const MaskSet m = generate_masks(8, 64, 64, 0.5, 3);
  double ones = 0;
  for (auto v : m.values()) ones += v;
  EXPECT_NEAR(ones / m.values().size(), 0.5, 0.02);
}

TEST(Masks, RejectsBadArguments) {
  EXPECT_THROW(generate_masks(0, 4, 4, 0.5, 1), InvalidArgument);
  EXPECT_THROW(generate_masks(2, 4, 4, 0.0, 1), InvalidArgument);
  EXPECT_THROW(generate_masks(2, 4, 4, 1.5, 1), InvalidArgument);
  EXPECT_THROW(MaskSet(1, 1, 2, {0, 2}), InvalidArgument);
  EXPECT_THROW(MaskSet(1, 1, 2, {0}), DimensionMismatch);
}

TEST(Masks, HashTracksContent) {
  const MaskSet a = generate_masks(2, 8, 8, 0.5, 1);
  std::vector<std::uint8_t> v = a.values();
  v[5] ^= 1;
  const MaskSet b(2, 8, 8, v);
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), MaskSet(2, 8, 8, a.values()).hash());
}

TEST(Encode, AllOnesMasksSumFrames) {
  const VideoBlock x = random_video(3, 5, 6, 2);
  const MaskSet ones(3, 5, 6, std::vector<std::uint8_t>(90, 1));
  const Measurement y = encode(x, ones);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(y.values.at(i, j), x.at(0, i, j) + x.at(1, i, j) + x.at(2, i, j));
}

TEST(Encode, SingleFrameIsHadamardProduct) {
  const VideoBlock x = random_video(1, 4, 4, 3);
  const MaskSet m = generate_masks(1, 4, 4, 0.5, 9);
  const Measurement y = encode(x, m);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.values.at(i, j), x.at(0, i, j) * m.at(0, i, j));
}

TEST(Encode, MatchesSensingMatrix) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = std::size_t{2} << (trial % 3), r = 1 + rng() % 16, c = 1 + rng() % 16;
    const MaskSet m = generate_masks(b, r, c, 0.5, rng());
    const VideoBlock x = random_video(b, r, c, rng());
    const auto hx = build_sensing_matrix(m).apply(x.tensor().values());
    const Measurement y = encode(x, m);
    for (std::size_t p = 0; p < hx.size(); ++p) EXPECT_LT(std::abs(hx[p] - y.values[p]), 1e-12);
  }
}

TEST(Encode, SensingMatrixTransposeIsAdjoint) {
  const MaskSet m = generate_masks(4, 7, 5, 0.5, 4);
  const SensingMatrix h = build_sensing_matrix(m);
  const auto x = testing::random_tensor<double>({4 * 35}, 1);
  const auto y = testing::random_tensor<double>({35}, 2);
  const auto hx = h.apply(x.values());
  const auto hty = h.apply_transpose(y.values());
  double a = 0, b = 0;
  for (std::size_t i = 0; i < 35; ++i) a += hx[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) b += x[i] * hty[i];
  EXPECT_NEAR(a, b, 1e-12);
  for (std::size_t i = 0; i < 35; ++i) EXPECT_EQ(h.row_sum(i), m.coverage(i / 5, i % 5));
}

TEST(Encode, Linearity) {
  const MaskSet m = generate_masks(4, 8, 8, 0.5, 6);
  const VideoBlock a = random_video(4, 8, 8, 1), b = random_video(4, 8, 8, 2);
  VideoBlock sum = a;
  for (std::size_t i = 0; i < sum.tensor().size(); ++i) sum.tensor()[i] = 2.0 * a.tensor()[i] - 0.5 * b.tensor()[i];
  const Measurement ya = encode(a, m), yb = encode(b, m), ys = encode(sum, m);
  for (std::size_t p = 0; p < 64; ++p) EXPECT_NEAR(ys.values[p], 2.0 * ya.values[p] - 0.5 * yb.values[p], 1e-12);
}

TEST(Encode, NoiseIsRecordedAndReproducible) {
  const MaskSet m = generate_masks(2, 8, 8, 0.5, 1);
  const VideoBlock x = random_video(2, 8, 8, 1);
  const Measurement a = encode(x, m, 0.1, 42), b = encode(x, m, 0.1, 42);
  EXPECT_EQ(a, b);
  ASSERT_TRUE(a.noise);
  EXPECT_EQ(a.noise->seed, 42u);
  EXPECT_FALSE(encode(x, m).noise);
  EXPECT_THROW(encode(x, m, -1.0), InvalidArgument);
  EXPECT_THROW(encode(random_video(3, 8, 8, 1), m), DimensionMismatch);
}

TEST(Normalize, AllOnesGivesFrameMean) {
  const VideoBlock x = random_video(4, 3, 3, 8);
  const MaskSet ones(4, 3, 3, std::vector<std::uint8_t>(36, 1));
  const Image ybar = normalize_measurement(encode(x, ones), ones);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0;
      for (std::size_t b = 0; b < 4; ++b) mean += x.at(b, i, j) / 4.0;
      EXPECT_NEAR(ybar.at(i, j), mean, 1e-15);
    }
}

TEST(Normalize, ZeroCoverageIsRejected) {
  const MaskSet m(2, 1, 2, {1, 0, 0, 0});
  const Measurement y{Image({1, 2}), std::nullopt};
  EXPECT_THROW(normalize_measurement(y, m), PreconditionViolation);
}

TEST(Fuse, ChannelLayout) {
  const MaskSet m = generate_masks(3, 4, 5, 0.5, 2);
  const Image ybar = testing::random_image(4, 5, 3);
  const FusedInput f = fuse_input(ybar, m);
  ASSERT_EQ(f.channels(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(f.channel(0, i, j), ybar.at(i, j));
      for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(f.channel(b + 1, i, j), ybar.at(i, j) * m.at(b, i, j));
    }
  EXPECT_THROW(fuse_input(Image({4, 4}), m), DimensionMismatch);
}

TEST(Frames, PgmRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "metasci_frames_test";
  std::filesystem::remove_all(dir);
  VideoBlock v(3, 5, 7);
  for (std::size_t i = 0; i < v.tensor().size(); ++i) v.tensor()[i] = static_cast<double>((i * 37) % 256) / 255.0;
  save_frames(v, dir, "f");
  const VideoBlock back = load_frames(dir);
  EXPECT_EQ(back, v);
  EXPECT_EQ(load_frames(dir, 2).frames(), 2u);
  EXPECT_THROW(load_frames(dir, 4), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Frames, MissingDirectory) { EXPECT_THROW(load_frames("/nonexistent/metasci"), IoError); }

TEST(Crops, StrideAndClamp) {
  EXPECT_EQ(axis_origins(512, 256, 256), (std::vector<std::size_t>{0, 256}));
  EXPECT_EQ(axis_origins(300, 256, 256), (std::vector<std::size_t>{0, 44}));
  EXPECT_EQ(axis_origins(10, 10, 3), (std::vector<std::size_t>{0}));
  const VideoBlock v = random_video(2, 8, 8, 1);
  const auto blocks = crop_blocks(v, 4, 4);
  ASSERT_EQ(blocks.size(), 4u);
  EXPECT_EQ(blocks[3].at(1, 0, 0), v.at(1, 4, 4));
}

TEST(Dataset, ValidateDetectsForeignMasks) {
  const MaskSet m = generate_masks(2, 16, 16, 0.5, 1);
  TaskDataset t = make_synthetic_task("t", m, 3, 5);
  EXPECT_NO_THROW(validate_task(t, 3));
  t.masks = generate_masks(2, 16, 16, 0.5, 2);
  EXPECT_THROW(validate_task(t), PreconditionViolation);
}

TEST(Dataset, SyntheticVideosInRangeAndMoving) {
  const VideoBlock v = moving_shapes(4, 32, 32, 9);
  for (double x : v.tensor().storage()) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_NE(v.frame(0), v.frame(3));
  EXPECT_EQ(v, moving_shapes(4, 32, 32, 9));
}

TEST(Dataset, IndexStreamCoversEachEpoch) {
  IndexStream s(5, 3);
  auto a = s.take(5);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(s.take(12).size(), 12u);
  EXPECT_THROW(IndexStream(0, 1), InvalidArgument);
}

}  // namespace
}  // namespace metasci
