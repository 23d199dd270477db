#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mstitch/bvh.hpp"
#include "mstitch/chunk_io.hpp"
#include "support.hpp"

using namespace mstitch;
using testing::fixture;
using testing::synthetic_motion;
using testing::toy_skeleton;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mstitch_test_motion_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void check_clips_close(const bvh::Clip& a, const bvh::Clip& b, double tol) {
  REQUIRE(a.skeleton.joint_count() == b.skeleton.joint_count());
  CHECK(a.skeleton.parents() == b.skeleton.parents());
  CHECK(a.skeleton.names() == b.skeleton.names());
  CHECK(a.channels == b.channels);
  CHECK(std::abs(a.frame_time - b.frame_time) < tol);
  for (std::size_t j = 0; j < a.skeleton.joint_count(); ++j) {
    CHECK((a.skeleton.rest_offset(j) - b.skeleton.rest_offset(j)).norm() < tol);
  }
  REQUIRE(a.frame_count() == b.frame_count());
  for (std::size_t f = 0; f < a.frame_count(); ++f) {
    CHECK((a.root_positions[f] - b.root_positions[f]).norm() < tol);
    for (std::size_t j = 0; j < a.skeleton.joint_count(); ++j) CHECK((a.rotations[f][j] - b.rotations[f][j]).norm() < tol);
  }
}

}  // namespace

// ---- BVH ------------------------------------------------------------------

TEST_CASE("BVH: zero motion recovers the rest pose") {
  const auto clip = bvh::load(fixture("two_joint.bvh"));
  CHECK(clip.skeleton.joint_count() == 2);
  CHECK(clip.fps() == doctest::Approx(30).epsilon(1e-5));
  const auto p = forward_kinematics(clip.skeleton, clip.rotations[0], clip.root_positions[0]);
  CHECK((p[0] - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  CHECK((p[1] - Eigen::Vector3d(0, 1.5, 0)).norm() < 1e-12);
  REQUIRE(clip.skeleton.end_site(1).has_value());
  CHECK((*clip.skeleton.end_site(1) - Eigen::Vector3d(0, 0.3, 0)).norm() < 1e-12);
}

TEST_CASE("BVH: a single Zrotation 90 channel is the 90° z rotation") {
  const auto clip = bvh::load(fixture("single_z90.bvh"));
  CHECK((clip.rotations[0][0] - axis_angle_to_matrix(Eigen::Vector3d(0, 0, M_PI / 2))).norm() < 1e-12);
}

TEST_CASE("BVH: channel order is honored") {
  const auto clip = bvh::load(fixture("mixed_orders.bvh"));
  // root: Yrot 30, Zrot −20, Xrot 10 in that order; positions interleaved
  const double d = M_PI / 180;
  const RotationMatrix expect = axis_rotation(1, 30 * d) * axis_rotation(2, -20 * d) * axis_rotation(0, 10 * d);
  CHECK((clip.rotations[0][0] - expect).norm() < 1e-12);
  CHECK((clip.root_positions[0] - Eigen::Vector3d(1.5, 2.5, 3.5)).norm() < 1e-12);
  // joint "b": Y 45, Z −55, X 65
  const RotationMatrix b = axis_rotation(1, 45 * d) * axis_rotation(2, -55 * d) * axis_rotation(0, 65 * d);
  CHECK((clip.rotations[0][2] - b).norm() < 1e-12);
}

TEST_CASE("BVH: parse errors carry line numbers") {
  try {
    bvh::load(fixture("bad_count.bvh"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 14);
  }
  try {
    bvh::load(fixture("bad_channel.bvh"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
    CHECK(std::string(e.what()).find("Wrotation") != std::string::npos);
  }
  CHECK_THROWS_AS(bvh::parse("HIERARCHY\nROOT a\n{\nOFFSET 0 0\n"), ParseError);
  CHECK_THROWS_AS(bvh::parse("HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 0\n}\n"), ParseError);
}

TEST_CASE("BVH: parse → serialize → parse is a fixed point") {
  for (const char* name : {"two_joint.bvh", "single_z90.bvh", "branching.bvh", "mixed_orders.bvh", "body22.bvh"}) {
    INFO(name);
    const auto a = bvh::load(fixture(name));
    const auto b = bvh::parse(bvh::serialize(a));
    check_clips_close(a, b, 1e-6);
    CHECK(bvh::serialize(b) == bvh::serialize(bvh::parse(bvh::serialize(b))));
  }
}

TEST_CASE("BVH: sequence round trip through from_sequence") {
  const auto seq = synthetic_motion(toy_skeleton(), 20, 15, 3);
  const auto back = bvh::to_sequence(bvh::parse(bvh::serialize(bvh::from_sequence(seq))));
  REQUIRE(back.frame_count() == 20);
  CHECK(back.fps() == doctest::Approx(15).epsilon(1e-9));
  for (std::size_t f = 0; f < 20; ++f) {
    const auto p = seq.positions(f), q = back.positions(f);
    for (std::size_t j = 0; j < p.size(); ++j) CHECK((p[j] - q[j]).norm() < 1e-6);
  }
}

// ---- motion data --------------------------------------------------------------

TEST_CASE("pose layout and re-basing") {
  const auto seq = synthetic_motion(toy_skeleton(), 30, 15, 1);
  CHECK(seq.width() == 3 + 6 * 7);
  CHECK(seq.root_position(0).norm() == 0);
  validate_poses(seq);
}

TEST_CASE("downsample") {
  const auto sk = toy_skeleton();
  const auto src = synthetic_motion(sk, 240, 120, 2);
  const auto d = downsample(src, 15);
  CHECK(d.frame_count() == 30);
  CHECK(d.fps() == 15);
  for (std::size_t f = 0; f < 30; ++f) CHECK(std::equal(d.frame(f).begin(), d.frame(f).end(), src.frame(8 * f).begin()));

  CHECK(downsample(src, 120) == src);

  const auto hundred = MotionSequence(sk, 100, src.values());
  const auto h = downsample(hundred, 15);
  CHECK(h.fps() == doctest::Approx(100.0 / 7));
  CHECK(h.frame_count() == (240 + 6) / 7);
  CHECK_THROWS_AS(downsample(d, 30), ContractError);
}

TEST_CASE("chunk") {
  const auto sk = toy_skeleton();
  CHECK(chunk(synthetic_motion(sk, 150, 15, 1), 75).size() == 2);
  CHECK(chunk(synthetic_motion(sk, 74, 15, 1), 75).empty());
  const auto src = synthetic_motion(sk, 225, 15, 4);
  const auto chunks = chunk(src, 75);
  REQUIRE(chunks.size() == 3);
  const auto& c2 = chunks[2];
  CHECK(c2.root_position(0).norm() == 0);
  for (std::size_t f = 0; f < 75; ++f) {
    CHECK((c2.root_position(f) - (src.root_position(150 + f) - src.root_position(150))).norm() < 1e-12);
    CHECK((c2.rotation(f, 3) - src.rotation(150 + f, 3)).norm() < 1e-12);
  }
}

TEST_CASE("augmentation: yaw rotation keeps heights and bone lengths") {
  const auto seq = synthetic_motion(toy_skeleton(), 20, 15, 5);
  const auto same = rotate_about_vertical(seq, 0.0);
  for (std::size_t i = 0; i < seq.values().size(); ++i) CHECK(std::abs(same.values()[i] - seq.values()[i]) < 1e-12);

  MotionSequence moved = seq;
  moved.set_root_position(3, Eigen::Vector3d(1, 0, 0.5));
  const auto half = rotate_about_vertical(moved, M_PI);
  CHECK((half.root_position(3) - Eigen::Vector3d(-1, 0, -0.5)).norm() < 1e-12);

  Rng rng(1);
  const auto copies = augment_rotations(seq, 2, rng);
  CHECK(copies.size() == 2);
  for (const auto& c : copies) {
    for (std::size_t f = 0; f < 20; ++f) {
      const auto p = seq.positions(f), q = c.positions(f);
      for (std::size_t j = 0; j < p.size(); ++j) {
        CHECK(std::abs(p[j].y() - q[j].y()) < 1e-9);
        for (std::size_t k = 0; k < j; ++k) CHECK(std::abs((p[j] - p[k]).norm() - (q[j] - q[k]).norm()) < 1e-9);
      }
      for (std::size_t j = 1; j < seq.joint_count(); ++j) CHECK((c.rotation(f, j) - seq.rotation(f, j)).norm() < 1e-12);
    }
  }
  // +Z up: the z coordinates stay put
  const auto z = rotate_about_vertical(seq, 1.0, UpAxis::Z);
  for (std::size_t f = 0; f < 20; ++f) {
    const auto p = seq.positions(f), q = z.positions(f);
    for (std::size_t j = 0; j < p.size(); ++j) CHECK(std::abs(p[j].z() - q[j].z()) < 1e-9);
  }
}

TEST_CASE("sample_context") {
  const auto seq = synthetic_motion(toy_skeleton(), 75, 15, 6);
  Rng rng(2);
  const auto full = sample_context(seq, 37, rng);
  CHECK(full.size() == 37);
  const auto one = sample_context(seq, 1, rng);
  CHECK(one.size() == 1);
  CHECK(std::equal(one.poses[0].begin(), one.poses[0].end(), seq.frame(one.indices[0]).begin()));
  CHECK_THROWS_AS(sample_context(seq, 0, rng), ContractError);
  CHECK_THROWS_AS(sample_context(seq, 38, rng), ContractError);

  std::vector<std::size_t> counts(75, 0);
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = sample_context(seq, 10, rng);
    CHECK(std::is_sorted(c.indices.begin(), c.indices.end()));
    CHECK(std::adjacent_find(c.indices.begin(), c.indices.end()) == c.indices.end());
    for (auto k : c.indices) ++counts[k];
  }
  const double p = 10.0 / 75, sigma = std::sqrt(n * p * (1 - p));
  for (auto c : counts) CHECK(std::abs(c - n * p) < 4 * sigma);
}

TEST_CASE("make_context validates indices") {
  const auto seq = synthetic_motion(toy_skeleton(), 10, 15, 7);
  CHECK(make_context(seq, {5, 1}).indices == std::vector<std::size_t>{1, 5});
  CHECK_THROWS_AS(make_context(seq, {1, 1}), ContractError);
  CHECK_THROWS_AS(make_context(seq, {10}), ContractError);
}

TEST_CASE("split_dataset") {
  auto ids = [](std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("c" + std::to_string(i));
    return v;
  };
  const auto hundred = ids(100);
  const auto s = split_dataset(hundred, 5);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);
  const auto again = split_dataset(hundred, 5);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  const auto n95 = split_dataset(ids(95), 1);
  CHECK(n95.train.size() == 76);
  CHECK(n95.val.size() == 9);
  CHECK(n95.test.size() == 10);
  CHECK_THROWS_AS(split_dataset(ids(9), 1), ContractError);
}

// ---- chunk files -----------------------------------------------------------------

TEST_CASE("chunk dataset round trip and header checks") {
  const fs::path dir = temp_dir("chunks");
  const auto sk = toy_skeleton();
  ChunkDataset data;
  data.skeleton = sk;
  data.fps = 15;
  data.block = 12;
  for (int i = 0; i < 3; ++i) {
    data.ids.push_back("clip/c" + std::to_string(i));
    data.chunks.push_back(synthetic_motion(sk, 12, 15, i));
  }
  const std::string path = (dir / "d.mstc").string();
  write_dataset(data, path);
  const auto back = read_dataset(path);
  CHECK(back.ids == data.ids);
  CHECK(back.block == 12);
  CHECK(back.fps == 15);
  CHECK(back.skeleton->parents() == sk->parents());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < data.chunks[c].values().size(); ++i) {
      CHECK(std::abs(back.chunks[c].values()[i] - data.chunks[c].values()[i]) < 1e-6);
    }
  }
  // magic
  {
    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 7) == "MSTCH01");
  }
  // corrupted header
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(2);
    f.put('X');
  }
  CHECK_THROWS_AS(read_dataset(path), ParseError);
  // truncated file
  write_dataset(data, path);
  fs::resize_file(path, fs::file_size(path) - 10);
  CHECK_THROWS_AS(read_dataset(path), ParseError);
}

TEST_CASE("manifest round trip") {
  const fs::path dir = temp_dir("manifest");
  Manifest m;
  m.dataset = "dataset.mstc";
  m.split.seed = 42;
  m.split.train = {"a", "b"};
  m.split.val = {"c"};
  m.split.test = {"d"};
  m.settings = {{"fps", "15"}};
  write_manifest(m, (dir / "manifest.json").string());
  const auto back = read_manifest((dir / "manifest.json").string());
  CHECK(back.dataset == m.dataset);
  CHECK(back.split.seed == 42);
  CHECK(back.split.train == m.split.train);
  CHECK(back.split.test == m.split.test);
  CHECK(back.settings == m.settings);
}
