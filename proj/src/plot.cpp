#include "mstitch/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mstitch {

std::vector<std::size_t> plotted_frames(std::size_t frame_count, std::size_t stride) {
  if (stride < 1) throw ContractError("plot stride must be at least 1");
  std::vector<std::size_t> frames;
  for (std::size_t f = 0; f < frame_count; f += stride) frames.push_back(f);
  return frames;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_strip_svg(const MotionSequence& seq, std::span<const std::size_t> context_indices,
                             const PlotOptions& options) {
  const auto frames = plotted_frames(seq.frame_count(), options.stride);
  const int vertical = static_cast<int>(options.up);
  const Skeleton& skel = seq.skeleton();

  // Horizontal coordinate is x relative to the frame's root; one scale for all panels.
  std::vector<JointPositions> poses;
  double lo_h = std::numeric_limits<double>::max(), hi_h = -lo_h, lo_v = lo_h, hi_v = -lo_h;
  for (std::size_t f : frames) {
    JointPositions p = seq.positions(f);
    const double root_x = p[0].x();
    for (auto& q : p) {
      q.x() -= root_x;
      lo_h = std::min(lo_h, q.x());
      hi_h = std::max(hi_h, q.x());
      lo_v = std::min(lo_v, q[vertical]);
      hi_v = std::max(hi_v, q[vertical]);
    }
    poses.push_back(std::move(p));
  }
  const double extent = std::max({hi_h - lo_h, hi_v - lo_v, 1e-9});
  const double margin = 0.1 * options.panel_px;
  const double scale = (options.panel_px - 2 * margin) / extent;
  const double mid_h = 0.5 * (lo_h + hi_h);

  std::ostringstream svg;
  const double width = options.panel_px * static_cast<double>(std::max<std::size_t>(frames.size(), 1));
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(options.panel_px + 16) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::size_t f = frames[k];
    const bool is_context = std::find(context_indices.begin(), context_indices.end(), f) != context_indices.end();
    const char* colour = is_context ? "#d62728" : "#404040";
    const double ox = options.panel_px * static_cast<double>(k) + 0.5 * options.panel_px;
    auto px = [&](const Eigen::Vector3d& q) { return ox + (q.x() - mid_h) * scale; };
    auto py = [&](const Eigen::Vector3d& q) { return options.panel_px - margin - (q[vertical] - lo_v) * scale; };
    svg << "<g class=\"frame" << (is_context ? " context" : "") << "\" data-frame=\"" << f << "\" stroke=\""
        << colour << "\" stroke-width=\"2\" fill=\"" << colour << "\">\n";
    const auto& p = poses[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const int parent = skel.parent(j);
      if (parent >= 0) {
        svg << "<line x1=\"" << num(px(p[parent])) << "\" y1=\"" << num(py(p[parent])) << "\" x2=\"" << num(px(p[j]))
            << "\" y2=\"" << num(py(p[j])) << "\"/>\n";
      }
      svg << "<circle cx=\"" << num(px(p[j])) << "\" cy=\"" << num(py(p[j])) << "\" r=\"2\"/>\n";
    }
    svg << "<text x=\"" << num(ox) << "\" y=\"" << num(options.panel_px + 12)
        << "\" font-size=\"10\" text-anchor=\"middle\" stroke=\"none\">" << f << "</text>\n</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mstitch
