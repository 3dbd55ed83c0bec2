#pragma once

// Binary snapshot files.
//
// A file is a sequence of records, each laid out little-endian as
//
//   char[4]  magic "IBSN"
//   u32      version (1)
//   u32      n_fields
//   u64      N
//   f64      L
//   f64      t
//   f64      samples[n_fields * N]   field-major
//
// Next to `name.bin` sits `name.bin.json` with the run metadata, the field
// names, per-record FNV-1a 64 checksums and a whole-file checksum.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ibsplit/solvers.hpp"

namespace ibsplit {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
std::string hex64(std::uint64_t v);

inline constexpr std::uint32_t snapshot_version = 1;

struct SnapshotMeta {
  std::string kind;  // "IB" or a model family name such as "CH+"
  PhysParams params;
  std::string scheme;
  double dt = 0.0;
  double t_end = 0.0;
  std::size_t stride = 1;
  std::vector<std::string> field_names;
};

struct SnapshotFile {
  SnapshotMeta meta;
  std::vector<double> times;
  std::vector<std::vector<Field>> records;  // [record][field]
};

SnapshotFile snapshots_from(const std::vector<IBState>& traj, const StepControl& ctrl);
SnapshotFile snapshots_from(const std::vector<WaveState>& traj, const StepControl& ctrl);
std::vector<IBState> ib_states_from(const SnapshotFile& file);
std::vector<WaveState> wave_states_from(const SnapshotFile& file);

// Writes `path` and `path` + ".json". Throws std::runtime_error with the
// path on I/O failure.
void write_snapshot_file(const std::filesystem::path& path, const SnapshotFile& file);
// Verifies headers and checksums; throws SnapshotFormatError on mismatch.
SnapshotFile read_snapshot_file(const std::filesystem::path& path);

}  // namespace ibsplit
