#include "mstitch/param_io.hpp"

#include <fstream>

#include "mstitch/binary_io.hpp"

namespace mstitch {

namespace {

constexpr const char* native_dtype() { return sizeof(Real) == 8 ? "f64" : "f32"; }

}  // namespace

const Tensor& ParamFile::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return t;
  throw ParseError("missing blob '" + name + "'");
}

bool ParamFile::has_blob(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return true;
  return false;
}

void write_param_file(const std::string& path, const char (&magic)[8], ParamFile file) {
  using namespace binio;
  file.header["dtype"] = native_dtype();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(magic, 8);
  put_string(out, file.header.dump());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.blobs.size()));
  for (const auto& [name, t] : file.blobs) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (Real v : t.values()) put<Real>(out, v);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

ParamFile read_param_file(const std::string& path, const char (&magic)[8]) {
  using namespace binio;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  expect_magic(in, magic, path);
  ParamFile file;
  try {
    file.header = nlohmann::ordered_json::parse(get_string(in, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": corrupt header: " + e.what());
  }
  const std::string dtype = file.header.value("dtype", "f32");
  if (dtype != "f32" && dtype != "f64") throw ParseError(path + ": unknown dtype " + dtype);
  const auto count = get<std::uint32_t>(in, "blob count");
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name = get_string(in, "blob name", 4096);
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 8) throw ParseError(path + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint32_t>(in, "extent");
    Tensor t(shape);
    for (auto& v : t.values()) {
      v = dtype == "f64" ? static_cast<Real>(get<double>(in, name)) : static_cast<Real>(get<float>(in, name));
    }
    file.blobs.emplace_back(std::move(name), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path + ": trailing bytes");
  return file;
}

void load_params(const ParamFile& file, nn::ParamStore& store, const std::string& prefix) {
  for (auto& [name, var] : store.entries()) {
    const Tensor& src = file.blob(prefix + name);
    if (src.shape() != var.value().shape()) {
      throw ParseError("parameter '" + name + "' has shape " + shape_string(src.shape()) + ", expected " +
                       shape_string(var.value().shape()));
    }
    var.value_mut() = src;
  }
}

void append_params(ParamFile& file, const nn::ParamStore& store, const std::string& prefix) {
  for (const auto& [name, var] : store.entries()) file.blobs.emplace_back(prefix + name, var.value());
}

nlohmann::ordered_json skeleton_to_json(const Skeleton& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.joint_count(); ++i) {
    nlohmann::ordered_json joint;
    joint["name"] = s.name(i);
    joint["parent"] = s.parent(i);
    const auto& o = s.rest_offset(i);
    joint["rest"] = {o.x(), o.y(), o.z()};
    if (const auto& site = s.end_site(i)) joint["end_site"] = {site->x(), site->y(), site->z()};
    j.push_back(joint);
  }
  return j;
}

Skeleton skeleton_from_json(const nlohmann::json& j) {
  std::vector<int> parents;
  std::vector<Eigen::Vector3d> offsets;
  std::vector<std::string> names;
  std::vector<std::optional<Eigen::Vector3d>> sites;
  for (const auto& joint : j) {
    names.push_back(joint.at("name").get<std::string>());
    parents.push_back(joint.at("parent").get<int>());
    const auto r = joint.at("rest").get<std::vector<double>>();
    offsets.emplace_back(r.at(0), r.at(1), r.at(2));
    if (joint.contains("end_site")) {
      const auto e = joint["end_site"].get<std::vector<double>>();
      sites.emplace_back(Eigen::Vector3d(e.at(0), e.at(1), e.at(2)));
    } else {
      sites.emplace_back();
    }
  }
  Skeleton s(parents, offsets, names);
  for (std::size_t i = 0; i < sites.size(); ++i) s.set_end_site(i, sites[i]);
  return s;
}

}  // namespace mstitch
