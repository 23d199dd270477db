#include "mstitch/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mstitch {

MotionSequence::MotionSequence(std::shared_ptr<const Skeleton> skeleton, double fps, std::vector<double> frames)
    : skeleton_(std::move(skeleton)), fps_(fps), frames_(std::move(frames)) {
  if (!skeleton_) throw ContractError("motion sequence needs a skeleton");
  if (!(fps_ > 0)) throw ContractError("motion sequence needs a positive frame rate");
  width_ = feature_width(skeleton_->joint_count());
  if (frames_.size() % width_ != 0) {
    throw DimensionError("motion values are not a whole number of " + std::to_string(width_) + "-wide frames");
  }
}

MotionSequence MotionSequence::from_rotations(std::shared_ptr<const Skeleton> skeleton, double fps,
                                              std::span<const Eigen::Vector3d> root_positions,
                                              std::span<const std::vector<RotationMatrix>> rotations) {
  if (root_positions.size() != rotations.size()) throw DimensionError("one root position per frame required");
  const std::size_t joints = skeleton->joint_count();
  MotionSequence seq(std::move(skeleton), fps, std::vector<double>(rotations.size() * feature_width(joints)));
  for (std::size_t f = 0; f < rotations.size(); ++f) {
    if (rotations[f].size() != joints) throw DimensionError("one rotation per joint required");
    seq.set_root_position(f, root_positions[f]);
    for (std::size_t j = 0; j < joints; ++j) seq.set_rotation(f, j, rotations[f][j]);
  }
  seq.rebase();
  return seq;
}

Eigen::Vector3d MotionSequence::root_position(std::size_t f) const {
  const double* p = frames_.data() + f * width_;
  return {p[0], p[1], p[2]};
}

void MotionSequence::set_root_position(std::size_t f, const Eigen::Vector3d& p) {
  double* dst = frames_.data() + f * width_;
  for (int k = 0; k < 3; ++k) dst[k] = p[k];
}

SixD MotionSequence::sixd(std::size_t f, std::size_t joint) const {
  SixD r;
  std::copy_n(frames_.data() + f * width_ + 3 + kRotationWidth * joint, 6, r.v.begin());
  return r;
}

RotationMatrix MotionSequence::rotation(std::size_t f, std::size_t joint) const {
  return sixd_to_matrix(sixd(f, joint));
}

void MotionSequence::set_rotation(std::size_t f, std::size_t joint, const RotationMatrix& r) {
  const SixD s = matrix_to_sixd(r);
  std::copy(s.v.begin(), s.v.end(), frames_.data() + f * width_ + 3 + kRotationWidth * joint);
}

std::vector<RotationMatrix> MotionSequence::rotations(std::size_t f) const {
  std::vector<RotationMatrix> out(joint_count());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = rotation(f, j);
  return out;
}

void MotionSequence::rebase() {
  if (frame_count() == 0) return;
  const Eigen::Vector3d origin = root_position(0);
  for (std::size_t f = 0; f < frame_count(); ++f) set_root_position(f, root_position(f) - origin);
}

MotionSequence MotionSequence::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frame_count()) throw ContractError("slice range out of bounds");
  return MotionSequence(skeleton_, fps_,
                        std::vector<double>(frames_.begin() + begin * width_, frames_.begin() + end * width_));
}

JointPositions MotionSequence::positions(std::size_t f) const {
  const auto rots = rotations(f);
  return forward_kinematics(*skeleton_, rots, root_position(f));
}

void validate_poses(const MotionSequence& seq) {
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    for (double v : seq.frame(f)) {
      if (!std::isfinite(v)) throw ContractError("non-finite value in frame " + std::to_string(f));
    }
    for (std::size_t j = 0; j < seq.joint_count(); ++j) (void)seq.rotation(f, j);
  }
}

void orthonormalize(MotionSequence& seq) {
  for (std::size_t f = 0; f < seq.frame_count(); ++f)
    for (std::size_t j = 0; j < seq.joint_count(); ++j) seq.set_rotation(f, j, seq.rotation(f, j));
}

MotionSequence downsample(const MotionSequence& seq, double target_fps) {
  if (!(target_fps > 0)) throw ContractError("target frame rate must be positive");
  if (target_fps > seq.fps()) {
    throw ContractError("cannot downsample " + std::to_string(seq.fps()) + " fps to a higher rate " +
                        std::to_string(target_fps));
  }
  const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(seq.fps() / target_fps)));
  std::vector<double> frames;
  for (std::size_t f = 0; f < seq.frame_count(); f += stride) {
    const auto row = seq.frame(f);
    frames.insert(frames.end(), row.begin(), row.end());
  }
  return MotionSequence(seq.skeleton_ptr(), seq.fps() / static_cast<double>(stride), std::move(frames));
}

std::vector<MotionSequence> chunk(const MotionSequence& seq, std::size_t block) {
  if (block < 1) throw ContractError("chunk size must be at least one frame");
  std::vector<MotionSequence> out;
  for (std::size_t begin = 0; begin + block <= seq.frame_count(); begin += block) {
    out.push_back(seq.slice(begin, begin + block));
    out.back().rebase();
  }
  return out;
}

MotionSequence rotate_about_vertical(const MotionSequence& seq, double yaw, UpAxis up) {
  const RotationMatrix q = axis_rotation(static_cast<int>(up), yaw);
  MotionSequence out = seq;
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    out.set_root_position(f, q * seq.root_position(f));
    if (seq.joint_count() > 0) {
      // Joint 0 is the root after topological ordering; the rest are parent-relative.
      out.set_rotation(f, 0, q * seq.rotation(f, 0));
    }
  }
  return out;
}

std::vector<MotionSequence> augment_rotations(const MotionSequence& seq, std::size_t count, Rng& rng, UpAxis up) {
  std::vector<MotionSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(rotate_about_vertical(seq, rng.uniform(0.0, 2.0 * M_PI), up));
  return out;
}

Context make_context(const MotionSequence& seq, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw ContractError("context indices must be unique");
  }
  Context ctx;
  for (std::size_t i : indices) {
    if (i >= seq.frame_count()) throw ContractError("context index " + std::to_string(i) + " outside the sequence");
    const auto row = seq.frame(i);
    ctx.poses.emplace_back(row.begin(), row.end());
  }
  ctx.indices = std::move(indices);
  return ctx;
}

Context sample_context(const MotionSequence& seq, std::size_t length, Rng& rng) {
  const std::size_t block = seq.frame_count();
  if (length < 1 || length > max_context_length(block)) {
    throw ContractError("context length " + std::to_string(length) + " outside [1, " +
                        std::to_string(max_context_length(block)) + "] (B/2 bound for B = " + std::to_string(block) +
                        ")");
  }
  // Partial Fisher–Yates: the first `length` slots are a uniform draw without replacement.
  std::vector<std::size_t> pool(block);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < length; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(block) - 1));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(length);
  return make_context(seq, std::move(pool));
}

DatasetSplit split_dataset(std::span<const std::string> chunk_ids, std::uint64_t seed) {
  const std::size_t n = chunk_ids.size();
  if (n < 10) throw ContractError("need at least 10 chunks to split, got " + std::to_string(n));
  std::vector<std::string> ids(chunk_ids.begin(), chunk_ids.end());
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(ids[i], ids[j]);
  }
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

Tensor to_tensor(const MotionSequence& seq) {
  Tensor t({seq.frame_count(), seq.width()});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(seq.values()[i]);
  return t;
}

MotionSequence from_tensor(const Tensor& t, std::shared_ptr<const Skeleton> skeleton, double fps) {
  std::vector<double> values(t.values().begin(), t.values().end());
  MotionSequence seq(std::move(skeleton), fps, std::move(values));
  if (t.cols() != seq.width()) throw DimensionError("tensor width does not match the skeleton");
  return seq;
}

}  // namespace mstitch
