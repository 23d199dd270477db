#include "mstitch/bvh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mstitch::bvh {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

struct Token {
  std::string text;
  std::size_t line;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) {
    std::size_t line = 1, i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (c == '\n') {
        ++line;
        ++i;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else {
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        tokens_.push_back({std::string(text.substr(i, j - i)), line});
        i = j;
      }
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }
  std::size_t line() const {
    if (tokens_.empty()) return 1;
    return done() ? tokens_.back().line : tokens_[pos_].line;
  }
  const Token& peek() const {
    if (done()) throw ParseError("unexpected end of file", line());
    return tokens_[pos_];
  }
  Token next() {
    Token t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view word) {
    const Token t = next();
    if (t.text != word) throw ParseError("expected '" + std::string(word) + "', found '" + t.text + "'", t.line);
  }
  double number() {
    const Token t = next();
    char* end = nullptr;
    const double v = std::strtod(t.text.c_str(), &end);
    if (end == t.text.c_str() || *end != '\0') throw ParseError("expected a number, found '" + t.text + "'", t.line);
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

Channel parse_channel(const Token& t) {
  static const std::pair<std::string_view, Channel> names[] = {
      {"Xposition", Channel::Xposition}, {"Yposition", Channel::Yposition}, {"Zposition", Channel::Zposition},
      {"Xrotation", Channel::Xrotation}, {"Yrotation", Channel::Yrotation}, {"Zrotation", Channel::Zrotation}};
  for (const auto& [name, c] : names)
    if (t.text == name) return c;
  throw ParseError("unsupported channel '" + t.text + "'", t.line);
}

bool is_position(Channel c) { return c <= Channel::Zposition; }
int axis_of(Channel c) { return static_cast<int>(c) % 3; }

struct Builder {
  std::vector<int> parents;
  std::vector<Eigen::Vector3d> offsets;  // global rest positions
  std::vector<std::string> names;
  std::vector<std::vector<Channel>> channels;
  std::vector<std::optional<Eigen::Vector3d>> end_sites;
  double scale = 1;
};

Eigen::Vector3d read_offset(Lexer& lex, double scale) {
  lex.expect("OFFSET");
  Eigen::Vector3d v;
  for (int k = 0; k < 3; ++k) v[k] = lex.number() * scale;
  return v;
}

void parse_joint(Lexer& lex, Builder& b, int parent) {
  const Token name = lex.next();
  const std::size_t index = b.parents.size();
  lex.expect("{");
  const Eigen::Vector3d local = read_offset(lex, b.scale);
  b.parents.push_back(parent);
  b.offsets.push_back(parent < 0 ? local : Eigen::Vector3d(b.offsets[parent] + local));
  b.names.push_back(name.text);
  b.end_sites.emplace_back();

  const Token ch = lex.next();
  if (ch.text != "CHANNELS") throw ParseError("expected 'CHANNELS', found '" + ch.text + "'", ch.line);
  const double count = lex.number();
  if (count < 0 || count > 6 || count != std::floor(count)) throw ParseError("bad channel count", ch.line);
  std::vector<Channel> channels;
  int rotation_channels = 0;
  for (int i = 0; i < static_cast<int>(count); ++i) {
    const Token t = lex.next();
    const Channel c = parse_channel(t);
    if (is_position(c) && parent >= 0) {
      throw ParseError("position channel '" + t.text + "' on non-root joint is unsupported", t.line);
    }
    rotation_channels += is_position(c) ? 0 : 1;
    channels.push_back(c);
  }
  if (rotation_channels == 2) throw ParseError("joints need zero, one or three rotation channels", ch.line);
  b.channels.push_back(std::move(channels));

  while (true) {
    const Token t = lex.next();
    if (t.text == "}") return;
    if (t.text == "JOINT") {
      parse_joint(lex, b, static_cast<int>(index));
    } else if (t.text == "End") {
      lex.expect("Site");
      lex.expect("{");
      b.end_sites[index] = read_offset(lex, b.scale);
      lex.expect("}");
    } else {
      throw ParseError("unexpected '" + t.text + "' inside joint " + name.text, t.line);
    }
  }
}

std::string format_number(double v) {
  if (v == 0) v = 0;  // no "-0"
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string_view channel_name(Channel c) {
  static constexpr std::string_view names[] = {"Xposition", "Yposition", "Zposition",
                                               "Xrotation", "Yrotation", "Zrotation"};
  return names[static_cast<int>(c)];
}

Clip parse(std::string_view text, double unit_scale) {
  // Split off the MOTION section so frames can be validated line by line.
  std::size_t motion_at = std::string_view::npos;
  {
    std::size_t pos = 0;
    while ((pos = text.find("MOTION", pos)) != std::string_view::npos) {
      const bool start_ok = pos == 0 || std::isspace(static_cast<unsigned char>(text[pos - 1]));
      const bool end_ok = pos + 6 >= text.size() || std::isspace(static_cast<unsigned char>(text[pos + 6]));
      if (start_ok && end_ok) {
        motion_at = pos;
        break;
      }
      pos += 6;
    }
  }
  if (motion_at == std::string_view::npos) throw ParseError("missing MOTION section");
  const std::size_t header_lines = static_cast<std::size_t>(std::count(text.begin(), text.begin() + motion_at, '\n'));

  Builder b;
  b.scale = unit_scale;
  {
    Lexer lex(text.substr(0, motion_at));
    lex.expect("HIERARCHY");
    lex.expect("ROOT");
    parse_joint(lex, b, -1);
    if (!lex.done()) throw ParseError("unexpected '" + lex.peek().text + "' after root joint", lex.peek().line);
  }

  Clip clip;
  try {
    clip.skeleton = Skeleton(b.parents, b.offsets, b.names);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid hierarchy: ") + e.what());
  }
  for (std::size_t j = 0; j < b.end_sites.size(); ++j) clip.skeleton.set_end_site(j, b.end_sites[j]);
  clip.channels = b.channels;

  std::istringstream motion{std::string(text.substr(motion_at))};
  std::string line;
  std::size_t line_no = header_lines;
  auto next_line = [&]() -> bool {
    while (std::getline(motion, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  auto header_value = [&](std::string_view key) {
    if (!next_line()) throw ParseError("missing '" + std::string(key) + "'", line_no);
    const auto colon = line.find(':');
    const std::string label = line.substr(0, colon);
    if (colon == std::string::npos || label.substr(label.find_first_not_of(" \t")) != key) {
      throw ParseError("expected '" + std::string(key) + ":'", line_no);
    }
    char* end = nullptr;
    const double v = std::strtod(line.c_str() + colon + 1, &end);
    if (end == line.c_str() + colon + 1) throw ParseError("missing value for '" + std::string(key) + "'", line_no);
    return v;
  };
  next_line();  // "MOTION"
  const double frames = header_value("Frames");
  if (frames < 0 || frames != std::floor(frames)) throw ParseError("invalid frame count", line_no);
  clip.frame_time = header_value("Frame Time");
  if (!(clip.frame_time > 0)) throw ParseError("frame time must be positive", line_no);

  std::size_t total_channels = 0;
  for (const auto& c : clip.channels) total_channels += c.size();
  const std::size_t joints = clip.skeleton.joint_count();
  std::vector<double> values;
  for (std::size_t f = 0; f < static_cast<std::size_t>(frames); ++f) {
    if (!next_line()) {
      throw ParseError("expected " + std::to_string(static_cast<std::size_t>(frames)) + " frames, found " +
                           std::to_string(f),
                       line_no);
    }
    values.clear();
    std::istringstream row(line);
    std::string tok;
    while (row >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (*end != '\0') throw ParseError("non-numeric motion value '" + tok + "'", line_no);
      values.push_back(v);
    }
    if (values.size() != total_channels) {
      throw ParseError("frame has " + std::to_string(values.size()) + " values but " +
                           std::to_string(total_channels) + " channels are declared",
                       line_no);
    }
    Eigen::Vector3d root = Eigen::Vector3d::Zero();
    std::vector<RotationMatrix> rots(joints);
    std::size_t at = 0;
    for (std::size_t j = 0; j < joints; ++j) {
      std::vector<int> axes;
      std::vector<double> angles;
      for (const Channel c : clip.channels[j]) {
        const double v = values[at++];
        if (is_position(c)) {
          root[axis_of(c)] = v * unit_scale;
        } else {
          axes.push_back(axis_of(c));
          angles.push_back(v * kDegToRad);
        }
      }
      rots[j] = euler_to_matrix(axes, angles);
    }
    clip.root_positions.push_back(root);
    clip.rotations.push_back(std::move(rots));
  }
  if (next_line()) throw ParseError("more frame lines than the declared frame count", line_no);
  return clip;
}

Clip load(const std::string& path, double unit_scale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), unit_scale);
}

std::string serialize(const Clip& clip) {
  const Skeleton& s = clip.skeleton;
  const std::size_t joints = s.joint_count();
  std::vector<std::vector<std::size_t>> children(joints);
  for (std::size_t j = 1; j < joints; ++j) children[s.parent(j)].push_back(j);

  std::ostringstream out;
  out << "HIERARCHY\n";
  auto write_joint = [&](auto&& self, std::size_t j, int depth) -> void {
    const std::string pad(depth, '\t');
    out << pad << (s.parent(j) < 0 ? "ROOT " : "JOINT ") << s.name(j) << "\n" << pad << "{\n";
    const Eigen::Vector3d off = s.local_offset(j);
    out << pad << "\tOFFSET " << format_number(off.x()) << ' ' << format_number(off.y()) << ' '
        << format_number(off.z()) << "\n";
    out << pad << "\tCHANNELS " << clip.channels[j].size();
    for (const Channel c : clip.channels[j]) out << ' ' << channel_name(c);
    out << "\n";
    for (const std::size_t c : children[j]) self(self, c, depth + 1);
    if (const auto& site = s.end_site(j)) {
      out << pad << "\tEnd Site\n" << pad << "\t{\n";
      out << pad << "\t\tOFFSET " << format_number(site->x()) << ' ' << format_number(site->y()) << ' '
          << format_number(site->z()) << "\n";
      out << pad << "\t}\n";
    }
    out << pad << "}\n";
  };
  write_joint(write_joint, 0, 0);

  out << "MOTION\nFrames: " << clip.frame_count() << "\nFrame Time: " << format_number(clip.frame_time) << "\n";
  for (std::size_t f = 0; f < clip.frame_count(); ++f) {
    bool first = true;
    for (std::size_t j = 0; j < joints; ++j) {
      std::vector<int> axes;
      for (const Channel c : clip.channels[j])
        if (!is_position(c)) axes.push_back(axis_of(c));
      std::array<double, 3> angles{};
      if (!axes.empty()) angles = matrix_to_euler(clip.rotations[f][j], axes);
      std::size_t next_angle = 0;
      for (const Channel c : clip.channels[j]) {
        const double v = is_position(c) ? clip.root_positions[f][axis_of(c)] : angles[next_angle++] / kDegToRad;
        out << (first ? "" : " ") << format_number(v);
        first = false;
      }
    }
    out << "\n";
  }
  return out.str();
}

void save(const Clip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize(clip);
}

MotionSequence to_sequence(const Clip& clip) {
  auto skeleton = std::make_shared<const Skeleton>(clip.skeleton);
  return MotionSequence::from_rotations(skeleton, clip.fps(), clip.root_positions, clip.rotations);
}

Clip from_sequence(const MotionSequence& seq) {
  Clip clip;
  clip.skeleton = seq.skeleton();
  const std::size_t joints = seq.joint_count();
  for (std::size_t j = 0; j < joints; ++j) {
    std::vector<Channel> ch;
    if (j == 0) ch = {Channel::Xposition, Channel::Yposition, Channel::Zposition};
    ch.insert(ch.end(), {Channel::Zrotation, Channel::Yrotation, Channel::Xrotation});
    clip.channels.push_back(std::move(ch));
  }
  clip.frame_time = 1.0 / seq.fps();
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    clip.root_positions.push_back(seq.root_position(f));
    clip.rotations.push_back(seq.rotations(f));
  }
  return clip;
}

}  // namespace mstitch::bvh
