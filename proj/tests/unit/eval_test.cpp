#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "metasci/config.hpp"
#include "metasci/io.hpp"
#include "metasci/metrics.hpp"
#include "metasci/pipelines.hpp"
#include "metasci/report.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

namespace metasci {
namespace {

using testing::random_image;
using testing::random_tensor;
using testing::random_video;
using testing::oracle_psnr;
using testing::oracle_ssim;

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metasci_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Metrics, PsnrMatchesOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image a = random_image(13 + s, 17, s), b = random_image(13 + s, 17, s + 100);
    EXPECT_NEAR(psnr(a, b), oracle_psnr(a, b), 1e-9);
  }
  const Image a = random_image(8, 8, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  Image b = a;
  b[0] += 0.1;
  // one pixel off by 0.1 over 64 pixels: mse = 0.01 / 64
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(64 / 0.01), 1e-9);
  EXPECT_THROW(psnr(a, random_image(8, 9, 1)), DimensionMismatch);
}

TEST(Metrics, VideoPsnrAveragesFrames) {
  const VideoBlock a = random_video(3, 9, 9, 1), b = random_video(3, 9, 9, 2);
  double want = 0;
  for (std::size_t f = 0; f < 3; ++f) want += oracle_psnr(a.frame(f), b.frame(f)) / 3;
  EXPECT_NEAR(psnr(a, b), want, 1e-9);
}

TEST(Metrics, RegionPsnrMatchesOracle) {
  const VideoBlock a = random_video(2, 6, 6, 3), b = random_video(2, 6, 6, 4);
  std::vector<std::uint8_t> region(36, 0);
  for (std::size_t p = 0; p < 36; p += 3) region[p] = 1;
  double want = 0;
  for (std::size_t f = 0; f < 2; ++f) {
    double se = 0;
    for (std::size_t p = 0; p < 36; ++p)
      if (region[p]) se += std::pow(a.at(f, p / 6, p % 6) - b.at(f, p / 6, p % 6), 2);
    want += 10 * std::log10(12 / se) / 2;
  }
  EXPECT_NEAR(region_psnr(a, b, region), want, 1e-9);
  EXPECT_THROW(region_psnr(a, b, std::vector<std::uint8_t>(36, 0)), InvalidArgument);
}

TEST(Metrics, SsimMatchesOracle) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = random_image(20 + s, 24, s);
    Image b = a;
    const Image noise = random_tensor<double>({20 + s, 24}, s + 50, -0.2, 0.2);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += noise[i];
    EXPECT_NEAR(ssim(a, b), oracle_ssim(a, b), 1e-9);
  }
}

TEST(Metrics, SsimProperties) {
  const Image a = random_image(16, 16, 1), b = random_image(16, 16, 2);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
  EXPECT_LT(ssim(a, b), 0.5);
  // Constant frames: the structure term is (0 + C2) / (0 + C2) = 1.
  const double x = 0.3, y = 0.6, c1 = 1e-4;
  EXPECT_NEAR(ssim(Image({12, 12}, x), Image({12, 12}, y)), (2 * x * y + c1) / (x * x + y * y + c1), 1e-12);
  EXPECT_THROW(ssim(Image({8, 8}), Image({8, 8})), InvalidArgument);
}

TEST(Metrics, GaussianTapsNormalizedAndSymmetric) {
  const auto g = gaussian_taps(11, 1.5);
  double s = 0;
  for (double v : g) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(g[i], g[10 - i]);
}

template <class T>
void round_trip_bits() {
  Tensor<T> t = random_tensor<T>({3, 1, 4, 2}, 9, -1e3, 1e3);
  t[0] = std::numeric_limits<T>::denorm_min();
  t[1] = -T(0);
  t[2] = std::numeric_limits<T>::max();
  t[3] = std::numeric_limits<T>::lowest();
  std::stringstream ss;
  write_tensor(ss, t);
  EXPECT_EQ(peek_element_size(ss), sizeof(T));
  const Tensor<T> back = read_tensor<T>(ss);
  ASSERT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data(), t.data(), t.size() * sizeof(T)), 0);
  EXPECT_EQ(ss.str().size(), 4 + 4 + 4 + 8 * 4 + t.size() * sizeof(T));
}

TEST(TensorFile, BitLosslessRoundTrip) {
  round_trip_bits<float>();
  round_trip_bits<double>();
  std::stringstream ss;
  write_tensor(ss, Tensor<double>({0}));
  EXPECT_EQ(read_tensor<double>(ss).size(), 0u);
}

TEST(TensorFile, RejectsMismatchAndCorruption) {
  std::stringstream a;
  write_tensor(a, Tensor<float>({2}, 1.0f));
  EXPECT_THROW(read_tensor<double>(a), IoError);
  std::stringstream bad("MTSX\x08\0\0\0");
  EXPECT_THROW(read_tensor<double>(bad), IoError);
  std::stringstream full;
  write_tensor(full, Tensor<double>({4}, 2.0));
  std::stringstream truncated(full.str().substr(0, full.str().size() - 3));
  EXPECT_THROW(read_tensor<double>(truncated), IoError);
  EXPECT_THROW(load_tensor<double>("/nonexistent/x.mtsr"), IoError);
}

TEST(TensorFile, HeaderFields) {
  const auto f = parse_header_fields("a=1 b=two  c=3.5");
  EXPECT_EQ(f.at("b"), "two");
  EXPECT_EQ(f.size(), 3u);
  EXPECT_THROW(parse_header_fields("a=1 novalue"), IoError);
}

TEST(Checkpoint, RoundTripBothPrecisions) {
  const fs::path dir = scratch("ckpt");
  const ArchConfig arch{4, 0.25, 1, 0.1};
  auto [base, meta] = init_params<float>(arch, 3);
  for (auto& t : meta.tensors) t = random_tensor<float>(t.shape(), t.size());
  save_checkpoint(dir / "m.msci", base, meta, 7);
  const auto c = load_checkpoint<float>(dir / "m.msci");
  EXPECT_EQ(c.base, base);
  EXPECT_EQ(c.meta, meta);
  EXPECT_EQ(c.epoch, 7u);
  EXPECT_THROW(load_checkpoint<double>(dir / "m.msci"), IoError);

  const auto [b64, m64] = init_params<double>(arch, 4);
  save_checkpoint(dir / "d.msci", b64, m64);
  EXPECT_EQ(load_checkpoint<double>(dir / "d.msci").base, b64);

  std::ofstream(dir / "junk.msci") << "MSCI0\n";
  EXPECT_THROW(load_checkpoint<float>(dir / "junk.msci"), IoError);
  fs::remove_all(dir);
}

TEST(Checkpoint, TruncatedFileRejected) {
  const fs::path dir = scratch("trunc");
  const auto [base, meta] = init_params<float>(ArchConfig{2, 0.125, 0, 0.2}, 1);
  save_checkpoint(dir / "m.msci", base, meta);
  fs::resize_file(dir / "m.msci", fs::file_size(dir / "m.msci") - 40);
  EXPECT_THROW(load_checkpoint<float>(dir / "m.msci"), IoError);
  fs::remove_all(dir);
}

TEST(Modulation, RoundTripKeepsBinding) {
  const fs::path dir = scratch("mod");
  const auto [base, meta] = init_params<double>(ArchConfig{2, 0.125, 0, 0.2}, 1);
  TaskModulation<double> m = unbound(meta, "held07");
  m.mask_seed = 1234567890123ull;
  m.mask_hash = 0xfedcba9876543210ull;
  m.params.tensors[3] = random_tensor<double>(m.params.tensors[3].shape(), 3);
  save_modulation(dir / "a.msca", m);
  const auto back = load_modulation<double>(dir / "a.msca");
  EXPECT_EQ(back.task, "held07");
  EXPECT_EQ(back.mask_seed, m.mask_seed);
  EXPECT_EQ(back.mask_hash, m.mask_hash);
  EXPECT_EQ(back.params, m.params);
  fs::remove_all(dir);
}

TEST(DomainFiles, MasksVideoMeasurement) {
  const fs::path dir = scratch("domain");
  const MaskSet masks = generate_masks(3, 7, 5, 0.4, 99);
  save_masks(dir / "m.mtsr", masks);
  const MaskSet mb = load_masks(dir / "m.mtsr");
  EXPECT_EQ(mb, masks);
  EXPECT_EQ(mb.hash(), masks.hash());
  EXPECT_EQ(mb.seed(), 99u);

  const VideoBlock v = random_video(3, 7, 5, 1);
  save_video(dir / "v.mtsr", v);
  EXPECT_EQ(load_video(dir / "v.mtsr"), v);

  const Measurement y = encode(v, masks, 0.05, 17);
  save_measurement(dir / "y.mtsr", y);
  EXPECT_EQ(load_measurement(dir / "y.mtsr"), y);
  fs::remove_all(dir);
}

TEST(ConfigFile, ValuesCommentsAndOverrides) {
  const Config c = Config::parse("; header\n[run]\nseed = 9\n; inline comment line\nname = demo\n\n[train]\nlr = 2.5e-3\nflag = true\n");
  EXPECT_EQ(c.get_uint("run", "seed", 0), 9u);
  EXPECT_EQ(c.get_string("run", "name", ""), "demo");
  EXPECT_DOUBLE_EQ(c.get_double("train", "lr", 0), 2.5e-3);
  EXPECT_TRUE(c.get_bool("train", "flag", false));
  EXPECT_EQ(c.get_uint("train", "missing", 4), 4u);
  EXPECT_TRUE(c.has("run", "name"));
  EXPECT_THROW(c.require_string("run", "absent"), ConfigError);
  EXPECT_NO_THROW(c.reject_unknown());
}

TEST(ConfigFile, SyntaxErrorNamesLine) {
  try {
    Config::parse("[run]\nseed = 1\n[broken\n", "bad.ini");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.ini:3"), std::string::npos) << e.what();
  }
}

TEST(ConfigFile, BadValuesAndUnknownKeys) {
  const Config c = Config::parse("[run]\nseed = minus\nthreads = -2\n[data]\nrowz = 4\n");
  EXPECT_THROW(c.get_uint("run", "seed", 0), ConfigError);
  EXPECT_THROW(c.get_uint("run", "threads", 0), ConfigError);
  try {
    c.reject_unknown();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("rowz"), std::string::npos) << e.what();
  }
  EXPECT_THROW(resolve_settings(Config::parse("[train]\nmode = sideways\n"), {}), ConfigError);
  EXPECT_THROW(resolve_settings(Config::parse("[arch]\nwidth_scale = 0.3\n"), {}), Error);
  EXPECT_THROW(Config::load("/nonexistent/run.ini"), Error);
}

TEST(ConfigFile, ResolveAppliesOverrides) {
  const Config c = Config::parse("[run]\nseed = 4\nthreads = 3\nprecision = double\n[train]\nmode = first-order\n");
  RunOptions o;
  o.seed = 11;
  const Settings s = resolve_settings(c, o);
  EXPECT_EQ(s.seed, 11u);
  EXPECT_EQ(s.threads, 3u);
  EXPECT_EQ(s.precision, Precision::kFloat64);
  EXPECT_EQ(s.train.mode, MetaGradientMode::kFirstOrder);
  o.deterministic = true;
  EXPECT_EQ(resolve_settings(c, o).threads, 1u);
}

TEST(ReportTable, AverageTextAndCsv) {
  Report r{"m", "c", {{"a", 20, 0.5, 1, 0.1}, {"b", 30, 0.7, 3, 0.3}}};
  const ReportRow avg = r.average();
  EXPECT_EQ(avg.scene, "average");
  EXPECT_DOUBLE_EQ(avg.psnr, 25);
  EXPECT_DOUBLE_EQ(avg.ssim, 0.6);
  EXPECT_DOUBLE_EQ(avg.adapt_seconds, 2);
  const std::string csv = r.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(r.to_text().find("average"), std::string::npos);
  const fs::path dir = scratch("report");
  r.write(dir, "x");
  EXPECT_TRUE(fs::exists(dir / "x.txt"));
  EXPECT_TRUE(fs::exists(dir / "x.csv"));
  fs::remove_all(dir);
}

TEST(ReportTable, MontageLayout) {
  const VideoBlock truth(Tensor<double>({2, 3, 4}, 1.0)), recon(2, 3, 4);
  const GrayImage g = montage(truth, recon, 2);
  EXPECT_EQ(g.rows, 3u * 2 + 2);
  EXPECT_EQ(g.cols, 4u * 2 + 2);
  EXPECT_EQ(g.pixels[0], 255);
  EXPECT_EQ(g.pixels[(g.rows - 1) * g.cols], 0);
}

std::string tiny_config(const fs::path& root) {
  return "[run]\nseed = 3\nprecision = double\ndata_dir = " + (root / "data").string() +
         "\noutput_dir = " + (root / "out").string() +
         "\n[data]\nframes = 2\nrows = 16\ncols = 16\ntrain_tasks = 2\nheldout_tasks = 1\ntrain_samples = 4\n"
         "adapt_samples = 4\ntest_samples = 2\n[arch]\nwidth_scale = 0.125\nres_blocks = 0\n[train]\nepochs = 1\n"
         "[adapt]\nepochs = 1\n[gaptv]\niterations = 3\n[tile]\nscene_rows = 32\nscene_cols = 32\ntile = 16\n"
         "overlap = 8\nband = 2\n";
}

TEST(Pipelines, EveryCommandRunsAndWritesArtifacts) {
  const fs::path root = scratch("pipelines");
  const Config cfg = Config::parse(tiny_config(root));
  RunOptions opts;
  opts.deterministic = true;
  for (const std::string& cmd : pipeline_names()) {
    const Report r = run_benchmark(cmd, cfg, opts);
    EXPECT_FALSE(r.rows.empty()) << cmd;
    EXPECT_TRUE(fs::exists(root / "out" / (cmd + "_report.txt"))) << cmd;
  }
  EXPECT_TRUE(fs::exists(root / "out" / "model.msci"));
  EXPECT_TRUE(fs::exists(root / "out" / "train_log.txt"));
  EXPECT_FALSE(task_dirs(root / "data", "heldout").empty());
  const TaskDataset t = load_task(task_dirs(root / "data", "heldout")[0], "test");
  EXPECT_EQ(t.size(), 2u);
  EXPECT_THROW(run_benchmark("nonsense", cfg, opts), Error);
  fs::remove_all(root);
}

TEST(Pipelines, MissingInputsAreUserErrors) {
  const fs::path root = scratch("missing");
  const Config cfg = Config::parse(tiny_config(root));
  EXPECT_THROW(run_benchmark("train", cfg, {}), Error);
  EXPECT_THROW(run_benchmark("reconstruct", cfg, {}), Error);
  fs::remove_all(root);
}

}  // namespace
}  // namespace metasci
