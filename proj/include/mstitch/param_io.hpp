#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "mstitch/kinematics.hpp"
#include "mstitch/nn.hpp"

namespace mstitch {

/// Named-tensor container used by model checkpoints and the feature
/// extractor artifact.
///
/// Layout (little-endian):
///   char[8] magic
///   u32 len + header text (JSON; carries "dtype": "f32" | "f64")
///   u32 blob count
///   per blob: u32 len + name, u32 rank, u32 extents…, values in dtype
struct ParamFile {
  nlohmann::ordered_json header;
  std::vector<std::pair<std::string, Tensor>> blobs;

  const Tensor& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;
};

/// Blobs are written in the build's native precision (f32 unless built
/// 64-bit), recorded in header["dtype"].
void write_param_file(const std::string& path, const char (&magic)[8], ParamFile file);
ParamFile read_param_file(const std::string& path, const char (&magic)[8]);

/// Copies blob values into same-named parameters. Throws ParseError on a
/// missing name or shape mismatch.
void load_params(const ParamFile& file, nn::ParamStore& store, const std::string& prefix = "");
void append_params(ParamFile& file, const nn::ParamStore& store, const std::string& prefix = "");

nlohmann::ordered_json skeleton_to_json(const Skeleton& s);
Skeleton skeleton_from_json(const nlohmann::json& j);

}  // namespace mstitch
