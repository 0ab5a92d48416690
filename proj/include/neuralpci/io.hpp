#pragma once

// Point cloud, label and pose files.
//
//   ascii-xyz   one "x y z" triple per line, whitespace separated
//   binary-f32  8-byte magic "NPCIPC01", u32 count, count*3 f32 (little-endian)
//   ply-ascii   "element vertex N" with float x/y/z properties
//   labels      one base-10 integer per line
//   poses       12 numbers per line, row-major 3x4 [R | t]

#include "neuralpci/binary_io.hpp"
#include "neuralpci/types.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace neuralpci {

enum class CloudFormat { xyz, binary, ply };

inline CloudFormat parse_format(std::string_view name) {
  if (name == "xyz" || name == "ascii-xyz" || name == "txt") return CloudFormat::xyz;
  if (name == "bin" || name == "binary" || name == "binary-f32") return CloudFormat::binary;
  if (name == "ply" || name == "ply-ascii") return CloudFormat::ply;
  throw std::invalid_argument("unknown cloud format '" + std::string(name) + "'");
}

inline std::string format_extension(CloudFormat f) {
  switch (f) {
    case CloudFormat::xyz: return ".xyz";
    case CloudFormat::binary: return ".bin";
    case CloudFormat::ply: return ".ply";
  }
  return ".xyz";
}

/// Format implied by a file extension; ascii-xyz when unrecognized.
inline CloudFormat format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".bin") return CloudFormat::binary;
  if (ext == ".ply") return CloudFormat::ply;
  return CloudFormat::xyz;
}

inline constexpr char kCloudMagic[8] = {'N', 'P', 'C', 'I', 'P', 'C', '0', '1'};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
inline T parse_number(std::string_view tok, const std::string& where) {
  T v{};
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(where + ": cannot parse '" + std::string(tok) + "'");
  return v;
}

inline bool blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

inline std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

/// Shortest text that reads back to the same float.
inline std::string float_text(float v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot open " + path);
  return is;
}

inline PointCloud load_xyz(const std::string& path) {
  auto is = open_in(path);
  std::vector<double> coords;
  std::string line;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    if (blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != 3) throw ParseError(where(path, no) + ": expected 3 values, got " + std::to_string(tok.size()));
    for (const auto t : tok) coords.push_back(parse_number<double>(t, where(path, no)));
  }
  Points p(3, static_cast<Eigen::Index>(coords.size() / 3));
  std::copy(coords.begin(), coords.end(), p.data());
  return PointCloud(std::move(p));
}

inline PointCloud load_binary(const std::string& path) {
  auto is = open_in(path, true);
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCloudMagic))
    throw ParseError(path + ": missing NPCIPC01 magic");
  std::uint32_t n = 0;
  try {
    n = binio::read_u32(is);
    Points p(3, static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) p(c, static_cast<Eigen::Index>(i)) = binio::read_f32(is);
    if (is.peek() != std::char_traits<char>::eof()) throw ParseError(path + ": trailing bytes after " + std::to_string(n) + " points");
    return PointCloud(std::move(p));
  } catch (const ParseError&) {
    throw;
  } catch (const std::runtime_error&) {
    throw ParseError(path + ": truncated, header declares " + std::to_string(n) + " points");
  }
}

inline PointCloud load_ply(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  std::size_t no = 0;
  auto next = [&]() -> bool {
    ++no;
    return static_cast<bool>(std::getline(is, line));
  };
  if (!next() || split_ws(line).empty() || split_ws(line)[0] != "ply") throw ParseError(where(path, 1) + ": not a ply file");
  long long vertices = -1;
  bool in_vertex = false, vertex_first = true;
  std::vector<std::string> props;
  while (true) {
    if (!next()) throw ParseError(where(path, no) + ": header has no end_header");
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw ParseError(where(path, no) + ": only ascii ply is supported");
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(where(path, no) + ": malformed element line");
      in_vertex = tok[1] == "vertex";
      if (in_vertex) {
        vertices = parse_number<long long>(tok[2], where(path, no));
      } else if (vertices < 0) {
        vertex_first = false;
      }
    } else if (tok[0] == "property" && in_vertex) {
      if (tok.size() != 3) throw ParseError(where(path, no) + ": malformed vertex property");
      props.emplace_back(tok[2]);
    }
  }
  if (vertices < 0) throw ParseError(path + ": no vertex element");
  if (!vertex_first) throw ParseError(path + ": vertex element must come first");
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i] == "x") ix = static_cast<int>(i);
    if (props[i] == "y") iy = static_cast<int>(i);
    if (props[i] == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path + ": vertex element lacks x/y/z");
  Points p(3, static_cast<Eigen::Index>(vertices));
  long long read = 0;
  while (read < vertices) {
    if (!next())
      throw ParseError(where(path, no) + ": declared " + std::to_string(vertices) + " vertices, found " +
                       std::to_string(read));
    if (blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != props.size())
      throw ParseError(where(path, no) + ": expected " + std::to_string(props.size()) + " values");
    p(0, read) = parse_number<double>(tok[static_cast<std::size_t>(ix)], where(path, no));
    p(1, read) = parse_number<double>(tok[static_cast<std::size_t>(iy)], where(path, no));
    p(2, read) = parse_number<double>(tok[static_cast<std::size_t>(iz)], where(path, no));
    ++read;
  }
  // With a single element, anything after the declared rows is a count mismatch.
  while (next()) {
    if (!blank_or_comment(line))
      throw ParseError(where(path, no) + ": more vertex rows than the declared " + std::to_string(vertices));
  }
  return PointCloud(std::move(p));
}

}  // namespace detail

inline PointCloud load_cloud(const std::string& path, CloudFormat format) {
  switch (format) {
    case CloudFormat::xyz: return detail::load_xyz(path);
    case CloudFormat::binary: return detail::load_binary(path);
    case CloudFormat::ply: return detail::load_ply(path);
  }
  throw std::invalid_argument("unknown format");
}

inline PointCloud load_cloud(const std::string& path) { return load_cloud(path, format_from_path(path)); }

/// Coordinates are written as 32-bit floats in every format.
inline void save_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  const auto& p = cloud.points;
  if (format == CloudFormat::binary) {
    auto os = detail::open_out(path, true);
    os.write(kCloudMagic, 8);
    binio::write_u32(os, static_cast<std::uint32_t>(p.cols()));
    for (Eigen::Index i = 0; i < p.cols(); ++i)
      for (int c = 0; c < 3; ++c) binio::write_f32(os, static_cast<float>(p(c, i)));
    if (!os) throw std::runtime_error("failed writing " + path);
    return;
  }
  std::ostringstream ss;
  if (format == CloudFormat::ply) {
    ss << "ply\nformat ascii 1.0\nelement vertex " << p.cols()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  }
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    ss << detail::float_text(static_cast<float>(p(0, i))) << ' ' << detail::float_text(static_cast<float>(p(1, i)))
       << ' ' << detail::float_text(static_cast<float>(p(2, i))) << '\n';
  }
  auto os = detail::open_out(path);
  os << ss.str();
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline void save_cloud(const PointCloud& cloud, const std::string& path) {
  save_cloud(cloud, path, format_from_path(path));
}

inline std::vector<int> load_labels(const std::string& path) {
  auto is = detail::open_in(path);
  std::vector<int> labels;
  std::string line;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    if (detail::blank_or_comment(line)) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 1) throw ParseError(detail::where(path, no) + ": expected one integer label");
    labels.push_back(detail::parse_number<int>(tok[0], detail::where(path, no)));
  }
  return labels;
}

inline void save_labels(const std::vector<int>& labels, const std::string& path) {
  std::ostringstream ss;
  for (int l : labels) ss << l << '\n';
  auto os = detail::open_out(path);
  os << ss.str();
}

/// Rotation plus translation (meters).
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  [[nodiscard]] RigidPose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  }
  [[nodiscard]] bool is_valid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Relative motion from frame a to frame b given world poses of both.
inline RigidPose relative_pose(const RigidPose& world_a, const RigidPose& world_b) {
  return world_a.inverse() * world_b;
}

inline std::vector<RigidPose> load_poses(const std::string& path) {
  auto is = detail::open_in(path);
  std::vector<RigidPose> poses;
  std::string line;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    if (detail::blank_or_comment(line)) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 12) throw ParseError(detail::where(path, no) + ": expected 12 pose values");
    RigidPose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c)
        p.rotation(r, c) = detail::parse_number<double>(tok[static_cast<std::size_t>(4 * r + c)], detail::where(path, no));
      p.translation(r) = detail::parse_number<double>(tok[static_cast<std::size_t>(4 * r + 3)], detail::where(path, no));
    }
    poses.push_back(p);
  }
  return poses;
}

inline void save_poses(const std::vector<RigidPose>& poses, const std::string& path) {
  std::ostringstream ss;
  ss.precision(17);
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ss << p.rotation(r, c) << ' ';
      ss << p.translation(r) << (r < 2 ? ' ' : '\n');
    }
  }
  auto os = detail::open_out(path);
  os << ss.str();
}

}  // namespace neuralpci
