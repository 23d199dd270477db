#include "mstitch/chunk_io.hpp"

#include <fstream>
#include <json.hpp>

#include "mstitch/binary_io.hpp"

namespace mstitch {

const MotionSequence& ChunkDataset::at(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return chunks[i];
  throw ContractError("chunk id '" + id + "' not in dataset");
}

std::vector<MotionSequence> ChunkDataset::select(const std::vector<std::string>& wanted) const {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  std::vector<MotionSequence> out;
  for (const auto& id : wanted) {
    auto it = index.find(id);
    if (it == index.end()) throw ContractError("chunk id '" + id + "' not in dataset");
    out.push_back(chunks[it->second]);
  }
  return out;
}

void write_dataset(const ChunkDataset& data, const std::string& path) {
  using namespace binio;
  if (data.ids.size() != data.chunks.size()) throw ContractError("one id per chunk required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Skeleton& s = *data.skeleton;
  out.write(kChunkMagic, 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.joint_count()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.block));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kRotationWidth));
  put<float>(out, static_cast<float>(data.fps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.chunks.size()));
  for (std::size_t j = 0; j < s.joint_count(); ++j) {
    put<std::int32_t>(out, s.parent(j));
    for (int k = 0; k < 3; ++k) put<float>(out, static_cast<float>(s.rest_offset(j)[k]));
    put_string(out, s.name(j));
    const auto& site = s.end_site(j);
    put<std::uint8_t>(out, site ? 1 : 0);
    if (site)
      for (int k = 0; k < 3; ++k) put<float>(out, static_cast<float>((*site)[k]));
  }
  for (std::size_t c = 0; c < data.chunks.size(); ++c) {
    const MotionSequence& seq = data.chunks[c];
    if (seq.frame_count() != data.block || seq.joint_count() != s.joint_count()) {
      throw ContractError("chunk '" + data.ids[c] + "' does not match the dataset block/skeleton");
    }
    put_string(out, data.ids[c]);
    for (double v : seq.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

ChunkDataset read_dataset(const std::string& path) {
  using namespace binio;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset " + path);
  expect_magic(in, kChunkMagic, path);
  const auto joints = get<std::uint32_t>(in, "joint count");
  const auto block = get<std::uint32_t>(in, "block size");
  const auto width = get<std::uint32_t>(in, "rotation width");
  const auto fps = get<float>(in, "fps");
  const auto count = get<std::uint32_t>(in, "chunk count");
  if (width != kRotationWidth) throw ParseError(path + ": unsupported rotation width " + std::to_string(width));
  if (joints == 0 || joints > 4096 || block == 0 || !(fps > 0)) throw ParseError(path + ": corrupt header");

  std::vector<int> parents;
  std::vector<Eigen::Vector3d> offsets;
  std::vector<std::string> names;
  std::vector<std::optional<Eigen::Vector3d>> sites;
  for (std::uint32_t j = 0; j < joints; ++j) {
    parents.push_back(get<std::int32_t>(in, "parent"));
    Eigen::Vector3d o;
    for (int k = 0; k < 3; ++k) o[k] = get<float>(in, "offset");
    offsets.push_back(o);
    names.push_back(get_string(in, "joint name", 4096));
    if (get<std::uint8_t>(in, "end-site flag")) {
      Eigen::Vector3d e;
      for (int k = 0; k < 3; ++k) e[k] = get<float>(in, "end site");
      sites.emplace_back(e);
    } else {
      sites.emplace_back();
    }
  }
  ChunkDataset data;
  Skeleton skeleton;
  try {
    skeleton = Skeleton(parents, offsets, names);
  } catch (const ConfigError& e) {
    throw ParseError(path + ": corrupt skeleton: " + e.what());
  }
  if (skeleton.parents() != parents) throw ParseError(path + ": skeleton not topologically ordered");
  for (std::size_t j = 0; j < sites.size(); ++j) skeleton.set_end_site(j, sites[j]);
  data.skeleton = std::make_shared<const Skeleton>(std::move(skeleton));
  data.fps = fps;
  data.block = block;
  const std::size_t values = static_cast<std::size_t>(block) * feature_width(joints);
  for (std::uint32_t c = 0; c < count; ++c) {
    data.ids.push_back(get_string(in, "chunk id", 4096));
    std::vector<double> frames(values);
    for (auto& v : frames) v = get<float>(in, "chunk data");
    data.chunks.emplace_back(data.skeleton, data.fps, std::move(frames));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path + ": trailing bytes after last chunk");
  return data;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "mstitch-manifest-1";
  j["dataset"] = manifest.dataset;
  j["split_seed"] = manifest.split.seed;
  j["settings"] = manifest.settings;
  j["train"] = manifest.split.train;
  j["val"] = manifest.split.val;
  j["test"] = manifest.split.test;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.split.seed = j.at("split_seed").get<std::uint64_t>();
    m.settings = j.value("settings", std::map<std::string, std::string>{});
    m.split.train = j.at("train").get<std::vector<std::string>>();
    m.split.val = j.at("val").get<std::vector<std::string>>();
    m.split.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid manifest: " + e.what());
  }
}

}  // namespace mstitch
