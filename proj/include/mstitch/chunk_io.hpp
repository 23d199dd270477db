#pragma once

#include <map>
#include <string>
#include <vector>

#include "mstitch/motion.hpp"

namespace mstitch {

/// Fixed-length training chunks sharing one skeleton.
///
/// On disk ("MSTCH01", all little-endian):
///   char[8] "MSTCH01\0"
///   u32 joints, u32 block, u32 rotation width (6), f32 fps, u32 chunk count
///   per joint: i32 parent, f32×3 rest position, u32 len + name bytes,
///              u8 has_end_site, f32×3 end-site offset if set
///   per chunk: u32 len + id bytes, block × (3 + 6·joints) f32 row-major
struct ChunkDataset {
  std::shared_ptr<const Skeleton> skeleton;
  double fps = 0;
  std::size_t block = 0;
  std::vector<std::string> ids;
  std::vector<MotionSequence> chunks;

  const MotionSequence& at(const std::string& id) const;
  /// Chunks for a list of ids, in that order.
  std::vector<MotionSequence> select(const std::vector<std::string>& ids) const;
};

inline constexpr char kChunkMagic[8] = {'M', 'S', 'T', 'C', 'H', '0', '1', '\0'};

void write_dataset(const ChunkDataset& data, const std::string& path);
ChunkDataset read_dataset(const std::string& path);

/// Human-readable (JSON) record of which chunk ids belong to which split.
struct Manifest {
  std::string dataset;  // dataset file name, relative to the manifest
  DatasetSplit split;
  std::map<std::string, std::string> settings;  // preprocessing parameters, for the record
};

void write_manifest(const Manifest& manifest, const std::string& path);
Manifest read_manifest(const std::string& path);

}  // namespace mstitch
