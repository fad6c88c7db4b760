#include "metasci/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "metasci/io.hpp"
#include "metasci/metrics.hpp"

namespace metasci {
namespace fs = std::filesystem;

namespace {

AdamConfig read_adam(const Config& c, const std::string& section) {
  AdamConfig a;
  a.lr = c.get_double(section, "lr", a.lr);
  a.beta1 = c.get_double(section, "beta1", a.beta1);
  a.beta2 = c.get_double(section, "beta2", a.beta2);
  a.eps = c.get_double(section, "eps", a.eps);
  return a;
}

LossKind read_loss(const Config& c, const std::string& section) {
  const std::string v = c.get_string(section, "loss", "mse");
  if (v == "mse") return LossKind::kMse;
  if (v == "frame-l2") return LossKind::kFrameL2;
  throw ConfigError(c.source() + ": [" + section + "] loss: expected mse or frame-l2, got '" + v + "'");
}

std::string index_name(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", k);
  return buf;
}

std::string task_name(const std::string& prefix, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", prefix.c_str(), k);
  return buf;
}

class Clock {
 public:
  explicit Clock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return enabled_ ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

void say(const Settings& s, const std::string& msg) {
  if (s.progress) *s.progress << msg << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

std::string full_precision(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

fs::path checkpoint_path(const Settings& s) { return s.checkpoint.empty() ? s.output_dir / "model.msci" : s.checkpoint; }

std::vector<TaskDataset> load_split(const Settings& s, const std::string& split, const std::string& subset) {
  std::vector<TaskDataset> out;
  for (const auto& dir : task_dirs(s.data_dir, split)) out.push_back(load_task(dir, subset));
  if (out.empty()) throw IoError("no task directories under " + (s.data_dir / split).string() + "; run simulate first");
  return out;
}

template <class T>
Checkpoint<T> load_model(const Settings& s) {
  const fs::path p = checkpoint_path(s);
  if (!fs::exists(p)) throw IoError("checkpoint " + p.string() + " not found; run train first");
  auto c = load_checkpoint<T>(p);
  if (c.base.arch.frames != s.arch.frames) throw ConfigError("checkpoint frame count differs from [data] frames");
  return c;
}

/// Mean PSNR/SSIM over a task's samples and the mean reconstruction time.
template <class T>
ReportRow evaluate_task(const TaskDataset& task, const BaseParams<T>& base, const TaskModulation<T>& mod,
                        const Settings& s) {
  ReportRow row{task.id};
  for (const Sample& smp : task.samples) {
    const Clock clock(!s.deterministic);
    const VideoBlock x = reconstruct(smp.measurement, task.masks, base, mod);
    row.test_seconds += clock.seconds();
    row.psnr += psnr(x, smp.video);
    row.ssim += ssim(x, smp.video);
  }
  const double n = static_cast<double>(task.size());
  row.psnr /= n;
  row.ssim /= n;
  row.test_seconds /= n;
  return row;
}

Report simulate(const Settings& s) {
  Report r{"simulate", s.data_dir.string(), {}};
  const DataSettings& d = s.data;
  auto add = [&](const TaskDataset& t) {
    ReportRow row{t.id};
    for (const Sample& smp : t.samples) {
      const Image ybar = normalize_measurement(smp.measurement, t.masks);
      VideoBlock naive(t.masks.frames(), t.masks.rows(), t.masks.cols());
      for (std::size_t b = 0; b < naive.frames(); ++b)
        std::copy(ybar.storage().begin(), ybar.storage().end(), naive.tensor().data() + b * t.masks.pixels());
      row.psnr += psnr(naive, smp.video) / static_cast<double>(t.size());
      row.ssim += ssim(naive, smp.video) / static_cast<double>(t.size());
    }
    r.rows.push_back(row);
  };
  for (std::size_t m = 0; m < d.train_tasks; ++m) {
    const std::string id = task_name("train", m);
    MaskSet masks = generate_masks(s.arch.frames, d.rows, d.cols, d.mask_density, derive_seed(s.seed, 100 + m));
    const TaskDataset t = make_synthetic_task(id, std::move(masks), d.train_samples, derive_seed(s.seed, 200 + m));
    save_task(s.data_dir / "train" / id, t, "train");
    add(t);
    say(s, "simulated " + id);
  }
  for (std::size_t m = 0; m < d.heldout_tasks; ++m) {
    const std::string id = task_name("heldout", m);
    const MaskSet masks =
        generate_masks(s.arch.frames, d.rows, d.cols, d.mask_density, derive_seed(s.seed, 300 + m));
    const TaskDataset adapt_set = make_synthetic_task(id, masks, d.adapt_samples, derive_seed(s.seed, 400 + m));
    const TaskDataset test_set = make_synthetic_task(id, masks, d.test_samples, derive_seed(s.seed, 500 + m));
    save_task(s.data_dir / "heldout" / id, adapt_set, "adapt");
    save_task(s.data_dir / "heldout" / id, test_set, "test");
    add(test_set);
    say(s, "simulated " + id);
  }
  r.method = "normalized-measurement";
  return r;
}

template <class T>
Report train_pipeline(const Settings& s) {
  const auto tasks = load_split(s, "train", "train");
  TrainConfig cfg = s.train;
  cfg.threads = s.threads;
  cfg.record_timing = !s.deterministic;
  cfg.checkpoint_dir = s.output_dir / "checkpoints";
  std::ofstream log;
  fs::create_directories(s.output_dir);
  log.open(s.output_dir / "train_log.txt");
  if (!log) throw IoError("cannot write training log");
  const CheckpointWriter<T> writer = [](const fs::path& p, const BaseParams<T>& b, const Modulation<T>& m,
                                        std::size_t epoch) { save_checkpoint(p, b, m, epoch); };
  const auto on_log = [&](const LogRecord& rec) {
    log << rec.to_string() << '\n';
    log.flush();
    say(s, rec.to_string());
  };
  const TrainResult<T> res = train<T>(s.arch, cfg, tasks, s.seed, writer, on_log);
  save_checkpoint(checkpoint_path(s), res.base, res.meta, cfg.epochs);

  Report r{"metasci-train", checkpoint_path(s).string(), {}};
  const TaskModulation<T> meta = unbound(res.meta);
  for (const auto& t : tasks) r.rows.push_back(evaluate_task(t, res.base, meta, s));
  return r;
}

template <class T>
Report adapt_pipeline(const Settings& s) {
  const Checkpoint<T> model = load_model<T>(s);
  const auto tasks = load_split(s, "heldout", "adapt");
  AdaptConfig cfg = s.adapt;
  cfg.threads = s.threads;
  cfg.record_timing = !s.deterministic;
  cfg.seed = s.seed;
  const auto adapted = adapt_detailed(model.base, model.meta, tasks, cfg);

  std::ostringstream log;
  Report r{"metasci-adapt", checkpoint_path(s).string(), {}};
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    save_modulation(s.output_dir / "modulations" / (tasks[m].id + ".msca"), adapted[m].modulation);
    for (std::size_t e = 0; e < adapted[m].epoch_loss.size(); ++e) {
      log << "task=" << tasks[m].id << " epoch=" << e + 1 << " loss=" << full_precision(adapted[m].epoch_loss[e])
          << " seconds=" << full_precision(adapted[m].seconds) << '\n';
    }
    const TaskDataset test = load_task(s.data_dir / "heldout" / tasks[m].id, "test");
    ReportRow row = evaluate_task(test, model.base, adapted[m].modulation, s);
    row.adapt_seconds = adapted[m].seconds;
    r.rows.push_back(row);
    say(s, "adapted " + tasks[m].id);
  }
  write_text(s.output_dir / "adapt_log.txt", log.str());
  return r;
}

template <class T>
Report reconstruct_pipeline(const Settings& s) {
  const Checkpoint<T> model = load_model<T>(s);
  const auto tasks = load_split(s, "heldout", "test");
  Report r{s.use_adapted ? "metasci-adapted" : "metasci-meta", checkpoint_path(s).string(), {}};
  for (const auto& task : tasks) {
    const fs::path mod_path = s.output_dir / "modulations" / (task.id + ".msca");
    TaskModulation<T> mod = unbound(model.meta);
    double adapt_seconds = 0.0;
    if (s.use_adapted) {
      if (!fs::exists(mod_path)) throw IoError("modulation " + mod_path.string() + " not found; run adapt first");
      mod = load_modulation<T>(mod_path);
      std::ifstream log(s.output_dir / "adapt_log.txt");
      std::string line;
      while (std::getline(log, line)) {
        const auto f = parse_header_fields(line);
        if (f.count("task") && f.at("task") == task.id && f.count("seconds")) adapt_seconds = std::stod(f.at("seconds"));
      }
    }
    const fs::path dir = s.output_dir / s.recon_name / task.id;
    fs::create_directories(dir);
    double test_seconds = 0.0;
    for (std::size_t k = 0; k < task.size(); ++k) {
      const Clock clock(!s.deterministic);
      const VideoBlock x = reconstruct(task.samples[k].measurement, task.masks, model.base, mod);
      test_seconds += clock.seconds();
      save_video(dir / (index_name(k) + ".mtsr"), x);
      save_frames(x, dir / "frames", index_name(k));
    }
    test_seconds /= static_cast<double>(task.size());
    write_text(dir / "timing.txt", "adapt_seconds=" + full_precision(adapt_seconds) +
                                       " test_seconds=" + full_precision(test_seconds) + "\n");
    ReportRow row = evaluate_task(task, model.base, mod, s);
    row.adapt_seconds = adapt_seconds;
    row.test_seconds = test_seconds;
    r.rows.push_back(row);
    say(s, "reconstructed " + task.id);
  }
  return r;
}

Report gap_tv_pipeline(const Settings& s) {
  const auto tasks = load_split(s, "heldout", "test");
  Report r{"gap-tv", "K=" + std::to_string(s.gaptv.iterations) + " tv_weight=" + full_precision(s.gaptv.tv_weight), {}};
  GapTvConfig cfg = s.gaptv;
  cfg.threads = s.threads;
  for (const auto& task : tasks) {
    const fs::path dir = s.output_dir / "recon_gaptv" / task.id;
    fs::create_directories(dir);
    for (std::size_t k = 0; k < task.size(); ++k) {
      const Clock clock(!s.deterministic);
      const GapTvResult g = gap_tv_reconstruct(task.samples[k].measurement, task.masks, cfg);
      const double secs = clock.seconds();
      save_video(dir / (index_name(k) + ".mtsr"), g.video);
      save_frames(g.video, dir / "frames", index_name(k));
      r.rows.push_back({task.id + "_" + index_name(k), psnr(g.video, task.samples[k].video),
                        ssim(g.video, task.samples[k].video), 0.0, secs});
    }
    say(s, "gap-tv " + task.id);
  }
  return r;
}

Report eval_pipeline(const Settings& s) {
  const auto tasks = load_split(s, "heldout", "test");
  Report r{s.recon_name, (s.output_dir / s.recon_name).string(), {}};
  for (const auto& task : tasks) {
    const fs::path dir = s.output_dir / s.recon_name / task.id;
    double adapt_seconds = 0.0, test_seconds = 0.0;
    std::ifstream timing(dir / "timing.txt");
    std::string line;
    if (std::getline(timing, line)) {
      const auto f = parse_header_fields(line);
      if (f.count("adapt_seconds")) adapt_seconds = std::stod(f.at("adapt_seconds"));
      if (f.count("test_seconds")) test_seconds = std::stod(f.at("test_seconds"));
    }
    for (std::size_t k = 0; k < task.size(); ++k) {
      const fs::path file = dir / (index_name(k) + ".mtsr");
      if (!fs::exists(file)) throw IoError("reconstruction " + file.string() + " not found");
      const VideoBlock x = load_video(file);
      const VideoBlock& truth = task.samples[k].video;
      r.rows.push_back({task.id + "_" + index_name(k), psnr(x, truth), ssim(x, truth), adapt_seconds, test_seconds});
      if (s.montage) write_pgm(dir / (index_name(k) + "_montage.pgm"), montage(truth, x));
    }
  }
  return r;
}

template <class T>
Report tile_demo(const Settings& s) {
  const Checkpoint<T> model = load_model<T>(s);
  const TileSettings& ts = s.tile;
  ShapesOptions shapes;
  const VideoBlock scene = moving_shapes(s.arch.frames, ts.scene_rows, ts.scene_cols, derive_seed(s.seed, 600), shapes);
  const MaskSet masks =
      generate_masks(s.arch.frames, ts.scene_rows, ts.scene_cols, s.data.mask_density, derive_seed(s.seed, 700));
  const Measurement y = encode(scene, masks);
  const std::vector<TaskModulation<T>> mods{unbound(model.meta)};
  const auto band = seam_band(plan_tiles(ts.scene_rows, ts.scene_cols, ts.tile, 0), ts.band);

  Report r{"tiled-metasci", "tile=" + std::to_string(ts.tile), {}};
  const fs::path dir = s.output_dir / "tile_demo";
  for (std::size_t v : {std::size_t{0}, ts.overlap}) {
    const TilePlan plan = plan_tiles(ts.scene_rows, ts.scene_cols, ts.tile, v);
    write_text(dir / ("plan_v" + std::to_string(v) + ".txt"), plan.serialize());
    const Clock clock(!s.deterministic);
    const VideoBlock x = tiled_reconstruct(y, masks, model.base, mods, plan, s.threads, ts.blend);
    const double secs = clock.seconds();
    save_video(dir / ("recon_v" + std::to_string(v) + ".mtsr"), x);
    if (s.montage) write_pgm(dir / ("montage_v" + std::to_string(v) + ".pgm"), montage(scene, x));
    const std::string tag = "v" + std::to_string(v) + "_tiles" + std::to_string(plan.count());
    r.rows.push_back({tag + "_full", psnr(x, scene), ssim(x, scene), 0.0, secs});
    r.rows.push_back({tag + "_band", region_psnr(x, scene, band), 0.0, 0.0, secs});
    say(s, tag + " done");
    if (ts.overlap == 0) break;
  }
  return r;
}

}  // namespace

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"simulate", "train", "adapt", "reconstruct", "gap-tv", "eval", "tile-demo"};
  return names;
}

Settings resolve_settings(const Config& c, const RunOptions& opts) {
  Settings s;
  const std::uint64_t seed = c.get_uint("run", "seed", 0);
  const std::uint64_t threads = c.get_uint("run", "threads", 1);
  s.seed = opts.seed.value_or(seed);
  s.threads = opts.threads.value_or(threads);
  s.deterministic = opts.deterministic || c.get_bool("run", "deterministic", false);
  if (s.deterministic) s.threads = 1;
  if (s.threads == 0) throw ConfigError("threads must be >= 1");
  const std::string precision = c.get_string("run", "precision", "float");
  if (precision == "float") s.precision = Precision::kFloat32;
  else if (precision == "double") s.precision = Precision::kFloat64;
  else throw ConfigError(c.source() + ": [run] precision: expected float or double, got '" + precision + "'");
  s.data_dir = c.get_string("run", "data_dir", "data");
  s.output_dir = c.get_string("run", "output_dir", "out");
  s.checkpoint = c.get_string("run", "checkpoint", "");
  s.progress = opts.progress;

  DataSettings& d = s.data;
  s.arch.frames = c.get_uint("data", "frames", 4);
  d.rows = c.get_uint("data", "rows", d.rows);
  d.cols = c.get_uint("data", "cols", d.cols);
  d.mask_density = c.get_double("data", "mask_density", d.mask_density);
  d.train_tasks = c.get_uint("data", "train_tasks", d.train_tasks);
  d.heldout_tasks = c.get_uint("data", "heldout_tasks", d.heldout_tasks);
  d.train_samples = c.get_uint("data", "train_samples", d.train_samples);
  d.adapt_samples = c.get_uint("data", "adapt_samples", d.adapt_samples);
  d.test_samples = c.get_uint("data", "test_samples", d.test_samples);

  s.arch.width_scale = c.get_double("arch", "width_scale", 0.25);
  s.arch.res_blocks = c.get_uint("arch", "res_blocks", s.arch.res_blocks);
  s.arch.leaky_slope = c.get_double("arch", "leaky_slope", s.arch.leaky_slope);
  try {
    s.arch.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(c.source() + ": [arch] " + e.what());
  }

  TrainConfig& t = s.train;
  t.inner_steps = c.get_uint("train", "inner_steps", t.inner_steps);
  t.inner_lr = c.get_double("train", "inner_lr", t.inner_lr);
  t.adam = read_adam(c, "train");
  t.epochs = c.get_uint("train", "epochs", t.epochs);
  t.pre_batch = c.get_uint("train", "pre_batch", t.pre_batch);
  t.obj_batch = c.get_uint("train", "obj_batch", t.obj_batch);
  t.max_steps = c.get_uint("train", "max_steps", t.max_steps);
  t.loss = read_loss(c, "train");
  const std::string mode = c.get_string("train", "mode", "exact");
  if (mode == "exact") t.mode = MetaGradientMode::kExactUnrolled;
  else if (mode == "first-order") t.mode = MetaGradientMode::kFirstOrder;
  else throw ConfigError(c.source() + ": [train] mode: expected exact or first-order, got '" + mode + "'");

  AdaptConfig& a = s.adapt;
  a.epochs = c.get_uint("adapt", "epochs", a.epochs);
  a.batch = c.get_uint("adapt", "batch", a.batch);
  a.adam = read_adam(c, "adapt");
  a.loss = read_loss(c, "adapt");

  GapTvConfig& g = s.gaptv;
  g.iterations = c.get_uint("gaptv", "iterations", g.iterations);
  g.tv_weight = c.get_double("gaptv", "tv_weight", g.tv_weight);
  g.tv_steps = c.get_uint("gaptv", "tv_steps", g.tv_steps);
  g.accelerate = c.get_bool("gaptv", "accelerate", g.accelerate);

  TileSettings& ts = s.tile;
  ts.scene_rows = c.get_uint("tile", "scene_rows", ts.scene_rows);
  ts.scene_cols = c.get_uint("tile", "scene_cols", ts.scene_cols);
  ts.tile = c.get_uint("tile", "tile", ts.tile);
  ts.overlap = c.get_uint("tile", "overlap", ts.overlap);
  ts.band = c.get_uint("tile", "band", ts.band);
  const std::string blend = c.get_string("tile", "blend", "average");
  if (blend == "average") ts.blend = BlendMode::kAverage;
  else if (blend == "center") ts.blend = BlendMode::kCenterCrop;
  else throw ConfigError(c.source() + ": [tile] blend: expected average or center, got '" + blend + "'");

  const std::string modulation = c.get_string("reconstruct", "modulation", "adapted");
  if (modulation == "adapted") s.use_adapted = true;
  else if (modulation == "meta") s.use_adapted = false;
  else throw ConfigError(c.source() + ": [reconstruct] modulation: expected adapted or meta, got '" + modulation + "'");
  s.recon_name = c.get_string("reconstruct", "name", s.use_adapted ? "recon" : "recon_meta");
  s.montage = c.get_bool("eval", "montage", true);

  c.reject_unknown();
  try {
    s.train.validate();
    s.adapt.validate();
    s.gaptv.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(c.source() + ": " + e.what());
  }
  return s;
}

void save_task(const fs::path& dir, const TaskDataset& task, const std::string& subset) {
  save_masks(dir / "masks.mtsr", task.masks);
  const fs::path sub = dir / subset;
  fs::create_directories(sub);
  for (std::size_t k = 0; k < task.size(); ++k) {
    save_measurement(sub / (index_name(k) + "_y.mtsr"), task.samples[k].measurement);
    save_video(sub / (index_name(k) + "_x.mtsr"), task.samples[k].video);
  }
}

TaskDataset load_task(const fs::path& dir, const std::string& subset) {
  TaskDataset t{dir.filename().string(), load_masks(dir / "masks.mtsr"), {}};
  const fs::path sub = dir / subset;
  if (!fs::is_directory(sub)) throw IoError("missing sample directory " + sub.string());
  for (std::size_t k = 0;; ++k) {
    const fs::path y = sub / (index_name(k) + "_y.mtsr");
    if (!fs::exists(y)) break;
    t.samples.push_back({load_measurement(y), load_video(sub / (index_name(k) + "_x.mtsr"))});
  }
  if (t.samples.empty()) throw IoError("no samples in " + sub.string());
  validate_task(t);
  return t;
}

std::vector<fs::path> task_dirs(const fs::path& data_dir, const std::string& split) {
  std::vector<fs::path> out;
  const fs::path root = data_dir / split;
  if (!fs::is_directory(root)) return out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Report run_benchmark(const std::string& command, const Settings& s) {
  const bool dbl = s.precision == Precision::kFloat64;
  Report r;
  if (command == "simulate") r = simulate(s);
  else if (command == "train") r = dbl ? train_pipeline<double>(s) : train_pipeline<float>(s);
  else if (command == "adapt") r = dbl ? adapt_pipeline<double>(s) : adapt_pipeline<float>(s);
  else if (command == "reconstruct") r = dbl ? reconstruct_pipeline<double>(s) : reconstruct_pipeline<float>(s);
  else if (command == "gap-tv") r = gap_tv_pipeline(s);
  else if (command == "eval") r = eval_pipeline(s);
  else if (command == "tile-demo") r = dbl ? tile_demo<double>(s) : tile_demo<float>(s);
  else throw InvalidArgument("unknown pipeline '" + command + "'");
  r.write(s.output_dir, command + "_report");
  return r;
}

Report run_benchmark(const std::string& command, const Config& cfg, const RunOptions& opts) {
  return run_benchmark(command, resolve_settings(cfg, opts));
}

}  // namespace metasci
