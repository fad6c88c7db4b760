#pragma once

// Benchmark orchestration behind the command-line tool. Every pipeline reads
// its inputs from and writes its artifacts to directories named in the config.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metasci/config.hpp"
#include "metasci/dataset.hpp"
#include "metasci/fast_adaptation.hpp"
#include "metasci/gap_tv.hpp"
#include "metasci/report.hpp"
#include "metasci/tiling.hpp"

namespace metasci {

/// Command-line overrides.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool deterministic = false;  // single thread, timing fields written as 0
  std::ostream* progress = nullptr;
};

enum class Precision { kFloat32, kFloat64 };

struct DataSettings {
  std::size_t rows = 64;
  std::size_t cols = 64;
  double mask_density = 0.5;
  std::size_t train_tasks = 4;
  std::size_t heldout_tasks = 2;
  std::size_t train_samples = 32;
  std::size_t adapt_samples = 16;
  std::size_t test_samples = 4;
};

struct TileSettings {
  std::size_t scene_rows = 512;
  std::size_t scene_cols = 512;
  std::size_t tile = 128;
  std::size_t overlap = 64;
  std::size_t band = 8;
  BlendMode blend = BlendMode::kAverage;
};

/// Fully resolved run settings.
struct Settings {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool deterministic = false;
  Precision precision = Precision::kFloat32;
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;  // defaults to <output_dir>/model.msci
  DataSettings data;
  ArchConfig arch;
  TrainConfig train;
  AdaptConfig adapt;
  GapTvConfig gaptv;
  TileSettings tile;
  bool use_adapted = true;  // reconstruct with per-task modulations when present
  std::string recon_name = "recon";
  bool montage = true;
  std::ostream* progress = nullptr;
};

/// Reads every known key and applies overrides; throws ConfigError on unknown keys or bad values.
Settings resolve_settings(const Config& cfg, const RunOptions& opts);

/// Task directory layout: <dir>/masks.mtsr and <dir>/<subset>/NNNN_y.mtsr, NNNN_x.mtsr.
void save_task(const std::filesystem::path& dir, const TaskDataset& task, const std::string& subset);
TaskDataset load_task(const std::filesystem::path& dir, const std::string& subset);
/// Task directories under <data_dir>/<split>, sorted by name.
std::vector<std::filesystem::path> task_dirs(const std::filesystem::path& data_dir, const std::string& split);

/// One of simulate, train, adapt, reconstruct, gap-tv, eval, tile-demo.
Report run_benchmark(const std::string& command, const Settings& settings);
Report run_benchmark(const std::string& command, const Config& cfg, const RunOptions& opts);

const std::vector<std::string>& pipeline_names();

}  // namespace metasci
