#pragma once

// On-disk formats.
//
// MTSR tensor record (little-endian):
//   "MTSR" | u32 element size (4 = float32, 8 = float64) | u32 rank | u64 dims[rank] | values
// MSCI1 checkpoint:
//   "MSCI1\n" | one header line of key=value pairs | every base tensor (kernel, bias per layer)
//   | every (alpha, beta) pair, each as an MTSR record
// MSCA1 task modulation:
//   "MSCA1\n" | header line (task, mask_seed, mask_hash, layers) | (alpha, beta) records
// Mask sets are an MTSR float32 tensor [B, rows, cols] plus a "<file>.meta" sidecar line.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "metasci/backbone.hpp"
#include "metasci/sci_forward.hpp"

namespace metasci {

/// Writes one MTSR record. T is float or double.
template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one MTSR record; the stored precision must match T.
template <class T>
Tensor<T> read_tensor(std::istream& is);

/// Element size of the next record without consuming it.
std::uint32_t peek_element_size(std::istream& is);

template <class T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);
template <class T>
Tensor<T> load_tensor(const std::filesystem::path& path);

/// Parses "k1=v1 k2=v2 ..."; throws IoError on malformed tokens.
std::map<std::string, std::string> parse_header_fields(const std::string& line);

template <class T>
struct Checkpoint {
  BaseParams<T> base;
  Modulation<T> meta;
  std::size_t epoch = 0;
};

template <class T>
void save_checkpoint(const std::filesystem::path& path, const BaseParams<T>& base, const Modulation<T>& meta,
                     std::size_t epoch = 0);
/// Loads and checks every tensor shape against the header's architecture.
template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

template <class T>
void save_modulation(const std::filesystem::path& path, const TaskModulation<T>& mod);
template <class T>
TaskModulation<T> load_modulation(const std::filesystem::path& path);

void save_masks(const std::filesystem::path& path, const MaskSet& masks);
MaskSet load_masks(const std::filesystem::path& path);

void save_video(const std::filesystem::path& path, const VideoBlock& video);
VideoBlock load_video(const std::filesystem::path& path);

void save_measurement(const std::filesystem::path& path, const Measurement& y);
Measurement load_measurement(const std::filesystem::path& path);

}  // namespace metasci
