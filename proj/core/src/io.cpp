#include "metasci/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "tensor files are written in host order");

namespace metasci {
namespace {

constexpr char kTensorMagic[4] = {'M', 'T', 'S', 'R'};
constexpr const char* kCheckpointMagic = "MSCI1";
constexpr const char* kModulationMagic = "MSCA1";

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw IoError("tensor file: unexpected end of data");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  return is;
}

void expect_magic_line(std::istream& is, const std::string& magic, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(is, line) || line != magic) {
    throw IoError(path.string() + ": not a " + magic + " file");
  }
}

std::string read_header_line(std::istream& is, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + ": missing header");
  return line;
}

const std::string& field(const std::map<std::string, std::string>& f, const std::string& key,
                         const std::filesystem::path& path) {
  auto it = f.find(key);
  if (it == f.end()) throw IoError(path.string() + ": header lacks '" + key + "'");
  return it->second;
}

std::uint64_t to_u64(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ": bad integer '" + s + "'");
  }
}

double to_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ": bad number '" + s + "'");
  }
}

std::string exact(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_sidecar(const std::filesystem::path& path, const std::string& line) {
  std::ofstream os(path.string() + ".meta");
  if (!os) throw IoError("cannot write " + path.string() + ".meta");
  os << line << '\n';
}

std::map<std::string, std::string> read_sidecar(const std::filesystem::path& path, bool required) {
  std::ifstream is(path.string() + ".meta");
  if (!is) {
    if (required) throw IoError("missing sidecar " + path.string() + ".meta");
    return {};
  }
  std::string line;
  std::getline(is, line);
  return parse_header_fields(line);
}

}  // namespace

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  os.write(kTensorMagic, 4);
  put<std::uint32_t>(os, sizeof(T));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw IoError("tensor file: write failed");
}

std::uint32_t peek_element_size(std::istream& is) {
  const auto start = is.tellg();
  char magic[4];
  is.read(magic, 4);
  const auto size = get<std::uint32_t>(is);
  is.seekg(start);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw IoError("tensor file: bad magic");
  return size;
}

template <class T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTensorMagic, 4) != 0) throw IoError("tensor file: bad magic");
  const auto elem = get<std::uint32_t>(is);
  if (elem != sizeof(T)) {
    throw IoError("tensor file: stored element size " + std::to_string(elem) + ", expected " +
                  std::to_string(sizeof(T)));
  }
  const auto rank = get<std::uint32_t>(is);
  if (rank > 16) throw IoError("tensor file: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is));
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!is) throw IoError("tensor file: truncated values");
  return t;
}

template <class T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

template <class T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_tensor<T>(is);
}

std::map<std::string, std::string> parse_header_fields(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw IoError("header: malformed field '" + tok + "'");
    out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const BaseParams<T>& base, const Modulation<T>& meta,
                     std::size_t epoch) {
  if (meta.tensors.size() != base.tensors.size()) throw DimensionMismatch("checkpoint: layer counts differ");
  auto os = open_out(path);
  const ArchConfig& a = base.arch;
  os << kCheckpointMagic << '\n'
     << "frames=" << a.frames << " width_scale=" << exact(a.width_scale) << " res_blocks=" << a.res_blocks
     << " leaky_slope=" << exact(a.leaky_slope) << " layers=" << base.layers() << " epoch=" << epoch
     << " precision=" << sizeof(T) << '\n';
  for (const auto& t : base.tensors) write_tensor(os, t);
  for (const auto& t : meta.tensors) write_tensor(os, t);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic_line(is, kCheckpointMagic, path);
  const auto f = parse_header_fields(read_header_line(is, path));
  ArchConfig arch;
  arch.frames = to_u64(field(f, "frames", path), path);
  arch.width_scale = to_double(field(f, "width_scale", path), path);
  arch.res_blocks = to_u64(field(f, "res_blocks", path), path);
  arch.leaky_slope = to_double(field(f, "leaky_slope", path), path);
  try {
    arch.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  const auto specs = layer_specs(arch);
  if (to_u64(field(f, "layers", path), path) != specs.size()) {
    throw IoError(path.string() + ": layer count does not match architecture");
  }
  Checkpoint<T> c;
  c.base.arch = arch;
  c.epoch = to_u64(field(f, "epoch", path), path);
  for (const LayerSpec& s : specs) {
    c.base.tensors.push_back(read_tensor<T>(is));
    c.base.tensors.push_back(read_tensor<T>(is));
    if (c.base.tensors[c.base.tensors.size() - 2].shape() != Shape{s.kernel, s.kernel, s.in_channels, s.out_channels} ||
        c.base.tensors.back().shape() != Shape{s.out_channels}) {
      throw IoError(path.string() + ": base tensor shape does not match architecture");
    }
  }
  for (const LayerSpec& s : specs) {
    c.meta.tensors.push_back(read_tensor<T>(is));
    c.meta.tensors.push_back(read_tensor<T>(is));
    if (c.meta.tensors[c.meta.tensors.size() - 2].shape() != Shape{s.in_channels} ||
        c.meta.tensors.back().shape() != Shape{s.out_channels}) {
      throw IoError(path.string() + ": modulation shape does not match architecture");
    }
  }
  return c;
}

template <class T>
void save_modulation(const std::filesystem::path& path, const TaskModulation<T>& mod) {
  if (mod.task.find_first_of(" \t\n=") != std::string::npos) {
    throw InvalidArgument("task id may not contain whitespace or '=': " + mod.task);
  }
  auto os = open_out(path);
  os << kModulationMagic << '\n'
     << "task=" << mod.task << " mask_seed=" << mod.mask_seed << " mask_hash=" << mod.mask_hash
     << " layers=" << mod.params.layers() << " precision=" << sizeof(T) << '\n';
  for (const auto& t : mod.params.tensors) write_tensor(os, t);
}

template <class T>
TaskModulation<T> load_modulation(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic_line(is, kModulationMagic, path);
  const auto f = parse_header_fields(read_header_line(is, path));
  TaskModulation<T> m;
  m.task = field(f, "task", path);
  m.mask_seed = to_u64(field(f, "mask_seed", path), path);
  m.mask_hash = to_u64(field(f, "mask_hash", path), path);
  const auto layers = to_u64(field(f, "layers", path), path);
  for (std::uint64_t k = 0; k < 2 * layers; ++k) m.params.tensors.push_back(read_tensor<T>(is));
  return m;
}

void save_masks(const std::filesystem::path& path, const MaskSet& masks) {
  Tensor<float> t({masks.frames(), masks.rows(), masks.cols()});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = masks.values()[i];
  save_tensor(path, t);
  write_sidecar(path, "B=" + std::to_string(masks.frames()) + " rows=" + std::to_string(masks.rows()) +
                          " cols=" + std::to_string(masks.cols()) + " p=" + exact(masks.density()) +
                          " seed=" + std::to_string(masks.seed()));
}

MaskSet load_masks(const std::filesystem::path& path) {
  const auto t = load_tensor<float>(path);
  const auto f = read_sidecar(path, true);
  if (t.rank() != 3 || to_u64(field(f, "B", path), path) != t.dim(0) ||
      to_u64(field(f, "rows", path), path) != t.dim(1) || to_u64(field(f, "cols", path), path) != t.dim(2)) {
    throw IoError(path.string() + ": mask tensor does not match its sidecar");
  }
  std::vector<std::uint8_t> values(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0f && t[i] != 1.0f) throw IoError(path.string() + ": mask values must be 0 or 1");
    values[i] = static_cast<std::uint8_t>(t[i]);
  }
  return MaskSet(t.dim(0), t.dim(1), t.dim(2), std::move(values), to_double(field(f, "p", path), path),
                 to_u64(field(f, "seed", path), path));
}

void save_video(const std::filesystem::path& path, const VideoBlock& video) { save_tensor(path, video.tensor()); }

VideoBlock load_video(const std::filesystem::path& path) {
  auto t = load_tensor<double>(path);
  if (t.rank() != 3) throw IoError(path.string() + ": video must be rank 3");
  return VideoBlock(std::move(t));
}

void save_measurement(const std::filesystem::path& path, const Measurement& y) {
  save_tensor(path, y.values);
  if (y.noise) {
    write_sidecar(path, "sigma=" + exact(y.noise->sigma) + " seed=" + std::to_string(y.noise->seed));
  } else {
    std::filesystem::remove(path.string() + ".meta");
  }
}

Measurement load_measurement(const std::filesystem::path& path) {
  Measurement y{load_tensor<double>(path), std::nullopt};
  if (y.values.rank() != 2) throw IoError(path.string() + ": measurement must be rank 2");
  const auto f = read_sidecar(path, false);
  if (!f.empty()) {
    y.noise = NoiseRecord{to_double(field(f, "sigma", path), path), to_u64(field(f, "seed", path), path)};
  }
  return y;
}

#define METASCI_IO_INSTANTIATE(T)                                                                       \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);                                       \
  template Tensor<T> read_tensor<T>(std::istream&);                                                     \
  template void save_tensor<T>(const std::filesystem::path&, const Tensor<T>&);                         \
  template Tensor<T> load_tensor<T>(const std::filesystem::path&);                                      \
  template void save_checkpoint<T>(const std::filesystem::path&, const BaseParams<T>&, const Modulation<T>&, \
                                   std::size_t);                                                        \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);                              \
  template void save_modulation<T>(const std::filesystem::path&, const TaskModulation<T>&);             \
  template TaskModulation<T> load_modulation<T>(const std::filesystem::path&);

METASCI_IO_INSTANTIATE(float)
METASCI_IO_INSTANTIATE(double)

}  // namespace metasci
