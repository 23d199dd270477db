#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mstitch/kinematics.hpp"
#include "mstitch/rng.hpp"
#include "mstitch/rotation.hpp"
#include "mstitch/tensor.hpp"

namespace mstitch {

/// Width of the per-joint rotation encoding.
inline constexpr std::size_t kRotationWidth = 6;

/// Values per pose: root position plus one 6-D rotation per joint.
constexpr std::size_t feature_width(std::size_t joints) { return 3 + kRotationWidth * joints; }

enum class UpAxis { Y = 1, Z = 2 };

/// Frames × (3 + 6J) poses with their frame rate. Root positions are
/// relative to the first frame once a sequence has been re-based.
class MotionSequence {
 public:
  MotionSequence() = default;
  MotionSequence(std::shared_ptr<const Skeleton> skeleton, double fps, std::vector<double> frames);

  /// Builds a sequence from local rotations and absolute root positions,
  /// re-basing the root trajectory on the first frame.
  static MotionSequence from_rotations(std::shared_ptr<const Skeleton> skeleton, double fps,
                                       std::span<const Eigen::Vector3d> root_positions,
                                       std::span<const std::vector<RotationMatrix>> rotations);

  const Skeleton& skeleton() const { return *skeleton_; }
  const std::shared_ptr<const Skeleton>& skeleton_ptr() const { return skeleton_; }
  double fps() const { return fps_; }
  std::size_t frame_count() const { return width_ ? frames_.size() / width_ : 0; }
  std::size_t joint_count() const { return skeleton_ ? skeleton_->joint_count() : 0; }
  std::size_t width() const { return width_; }

  std::span<const double> frame(std::size_t f) const { return {frames_.data() + f * width_, width_}; }
  std::span<double> frame(std::size_t f) { return {frames_.data() + f * width_, width_}; }
  const std::vector<double>& values() const { return frames_; }

  Eigen::Vector3d root_position(std::size_t f) const;
  void set_root_position(std::size_t f, const Eigen::Vector3d& p);
  SixD sixd(std::size_t f, std::size_t joint) const;
  RotationMatrix rotation(std::size_t f, std::size_t joint) const;
  void set_rotation(std::size_t f, std::size_t joint, const RotationMatrix& r);
  std::vector<RotationMatrix> rotations(std::size_t f) const;

  /// Shift root positions so frame 0 sits at the origin.
  void rebase();
  /// Frames [begin, end) as a new sequence (not re-based).
  MotionSequence slice(std::size_t begin, std::size_t end) const;
  /// Global joint positions of one frame.
  JointPositions positions(std::size_t f) const;

  friend bool operator==(const MotionSequence& a, const MotionSequence& b) {
    return a.fps_ == b.fps_ && a.frames_ == b.frames_ && a.width_ == b.width_;
  }

 private:
  std::shared_ptr<const Skeleton> skeleton_;
  double fps_ = 0;
  std::size_t width_ = 0;
  std::vector<double> frames_;
};

/// Keyframes: poses at strictly increasing frame indices.
struct Context {
  std::vector<std::size_t> indices;
  std::vector<std::vector<double>> poses;  // one full pose per index
  std::size_t size() const { return indices.size(); }
};

/// Throws unless every 6-D group decodes to a rotation and sizes agree.
void validate_poses(const MotionSequence& seq);

/// Re-project each 6-D group onto the nearest valid encoding
/// (matrix_to_sixd ∘ sixd_to_matrix).
void orthonormalize(MotionSequence& seq);

/// Largest allowed context length for a block: ⌊B/2⌋.
constexpr std::size_t max_context_length(std::size_t block) { return block / 2; }

/// Keeps frames 0, s, 2s, … with s = round(source_fps / target_fps).
MotionSequence downsample(const MotionSequence& seq, double target_fps);

/// Non-overlapping windows of `block` frames, remainder dropped, each re-based.
std::vector<MotionSequence> chunk(const MotionSequence& seq, std::size_t block);

/// Rotate the whole motion by `yaw` radians about the vertical axis.
MotionSequence rotate_about_vertical(const MotionSequence& seq, double yaw, UpAxis up = UpAxis::Y);

/// `count` copies, each with an independent yaw ~ U[0, 2π).
std::vector<MotionSequence> augment_rotations(const MotionSequence& seq, std::size_t count, Rng& rng,
                                              UpAxis up = UpAxis::Y);

/// L distinct frames drawn uniformly without replacement, sorted.
Context sample_context(const MotionSequence& seq, std::size_t length, Rng& rng);
/// Context at caller-chosen frames; indices must be unique and in range.
Context make_context(const MotionSequence& seq, std::vector<std::size_t> indices);

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then ⌊0.8n⌋ / ⌊0.1n⌋ / remainder. Needs n ≥ 10.
DatasetSplit split_dataset(std::span<const std::string> chunk_ids, std::uint64_t seed);

/// Row-major frames × width tensor.
Tensor to_tensor(const MotionSequence& seq);
MotionSequence from_tensor(const Tensor& t, std::shared_ptr<const Skeleton> skeleton, double fps);

}  // namespace mstitch
