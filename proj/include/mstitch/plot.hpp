#pragma once

#include <span>
#include <string>

#include "mstitch/motion.hpp"

namespace mstitch {

struct PlotOptions {
  std::size_t stride = 5;
  UpAxis up = UpAxis::Y;
  double panel_px = 120;  // panel width and height in SVG units
};

/// Frames 0, stride, 2·stride, … that a strip shows.
std::vector<std::size_t> plotted_frames(std::size_t frame_count, std::size_t stride);

/// SVG strip of front-view orthographic skeletons, one panel per plotted
/// frame, bones drawn parent→child. Context frames are drawn in red.
std::string render_strip_svg(const MotionSequence& seq, std::span<const std::size_t> context_indices,
                             const PlotOptions& options = {});

}  // namespace mstitch
