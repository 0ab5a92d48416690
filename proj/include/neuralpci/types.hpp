#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace neuralpci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Points = Eigen::Matrix3Xd;

/// Tensor shapes disagree with what an operation expects.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computation produced or received a non-finite value.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file content; the message carries the offending line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A set of 3D points sampled at one timestamp. Points are stored as the
/// columns of a 3xN matrix so a whole cloud can be fed to the network as
/// one batch.
struct PointCloud {
  Points points;
  double time = 0.0;

  PointCloud() = default;
  explicit PointCloud(Points p, double t = 0.0) : points(std::move(p)), time(t) {}

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
  [[nodiscard]] bool empty() const { return points.cols() == 0; }
  [[nodiscard]] Vec3 point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }
};

struct LabeledPointCloud {
  PointCloud cloud;
  std::vector<int> labels;
};

/// Ordered input frames with strictly increasing timestamps.
struct InputWindow {
  std::vector<PointCloud> frames;

  [[nodiscard]] std::size_t size() const { return frames.size(); }
  [[nodiscard]] std::vector<double> timestamps() const {
    std::vector<double> t;
    t.reserve(frames.size());
    for (const auto& f : frames) t.push_back(f.time);
    return t;
  }
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

/// Checks the structural preconditions shared by fitting entry points:
/// at least two frames, equal nonzero point counts, increasing times.
inline void validate_window(const InputWindow& window) {
  if (window.size() < 2) throw std::invalid_argument("window needs at least 2 frames");
  const auto n = window.frames.front().size();
  if (n == 0) throw std::invalid_argument("window frames must be nonempty");
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (window.frames[i].size() != n)
      throw ShapeError("window frames must share one point count");
    if (!window.frames[i].points.allFinite())
      throw NumericError("window frame " + std::to_string(i) + " has non-finite coordinates");
    if (i > 0 && !(window.frames[i].time > window.frames[i - 1].time))
      throw std::invalid_argument("window timestamps must be strictly increasing");
  }
}

}  // namespace neuralpci
