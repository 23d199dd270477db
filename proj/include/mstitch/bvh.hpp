#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mstitch/kinematics.hpp"
#include "mstitch/motion.hpp"

namespace mstitch::bvh {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

std::string_view channel_name(Channel c);

/// Parsed BVH clip. Rotations are local (parent-relative) matrices built
/// from each joint's Euler channels in the order the file lists them.
struct Clip {
  Skeleton skeleton;
  std::vector<std::vector<Channel>> channels;  // per joint, file order
  double frame_time = 0;                       // seconds
  std::vector<Eigen::Vector3d> root_positions;  // per frame, absolute
  std::vector<std::vector<RotationMatrix>> rotations;  // frame × joint

  double fps() const { return 1.0 / frame_time; }
  std::size_t frame_count() const { return rotations.size(); }
};

/// Throws ParseError (with the offending line) on malformed structure,
/// unsupported channels, or a frame whose value count differs from the
/// declared channels. Position channels are accepted on the root only, and
/// a joint carries zero, one or three rotation channels. Lengths are
/// multiplied by `unit_scale`.
Clip parse(std::string_view text, double unit_scale = 1.0);
Clip load(const std::string& path, double unit_scale = 1.0);

std::string serialize(const Clip& clip);
void save(const Clip& clip, const std::string& path);

/// Sequence view of a clip (root trajectory re-based on frame 0).
MotionSequence to_sequence(const Clip& clip);

/// Clip for a sequence, using XYZ position + ZYX rotation channels on the
/// root and ZYX rotation channels elsewhere.
Clip from_sequence(const MotionSequence& seq);

}  // namespace mstitch::bvh
