#pragma once

// Sequence windowing, resampling, closed-form synthetic scenes and the
// large-motion sample selection used to build hard evaluation subsets.

#include "neuralpci/io.hpp"
#include "neuralpci/types.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace neuralpci {

// ---------------------------------------------------------------- windowing

struct WindowSpec {
  std::size_t frames = 4;     // M
  std::size_t n_between = 0;  // held-out frames between the two middle inputs
  std::size_t interval = 0;   // sequence frames from one input to the next; 0 means n_between + 1
  std::size_t stride = 1;     // sequence frames between consecutive window starts

  [[nodiscard]] std::size_t step() const { return interval == 0 ? n_between + 1 : interval; }
};

struct WindowSample {
  InputWindow window;
  std::vector<PointCloud> ground_truth;
  std::vector<std::size_t> input_indices;
  std::vector<std::size_t> truth_indices;
  /// Field-axis time of each ground-truth frame (inputs sit at 0..M-1).
  std::vector<double> truth_times;
};

/// Sliding windows over a sequence. Held-out frames are spaced evenly between
/// the two middle inputs, so the interval must be a multiple of n_between + 1.
/// A sequence too short for one window gives an empty result.
inline std::vector<WindowSample> make_windows(const std::vector<PointCloud>& sequence, const WindowSpec& spec) {
  if (spec.frames < 2) throw std::invalid_argument("a window needs at least 2 frames");
  if (spec.stride < 1) throw std::invalid_argument("window stride must be >= 1");
  const std::size_t step = spec.step();
  if (step % (spec.n_between + 1) != 0)
    throw std::invalid_argument("interval must be a multiple of n_between + 1");
  const std::size_t gap = step / (spec.n_between + 1);
  const std::size_t span = (spec.frames - 1) * step + 1;
  const std::size_t lo = (spec.frames - 1) / 2;

  std::vector<WindowSample> out;
  for (std::size_t start = 0; start + span <= sequence.size(); start += spec.stride) {
    WindowSample w;
    for (std::size_t k = 0; k < spec.frames; ++k) {
      w.input_indices.push_back(start + k * step);
      w.window.frames.push_back(sequence[start + k * step]);
    }
    for (std::size_t j = 1; j <= spec.n_between; ++j) {
      const std::size_t idx = start + lo * step + j * gap;
      w.truth_indices.push_back(idx);
      w.ground_truth.push_back(sequence[idx]);
      w.truth_times.push_back(static_cast<double>(lo) + static_cast<double>(j) / static_cast<double>(spec.n_between + 1));
    }
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<WindowSample> make_windows(const std::vector<PointCloud>& sequence, std::size_t frames = 4,
                                              std::size_t n_between = 0, std::size_t stride = 1) {
  return make_windows(sequence, WindowSpec{frames, n_between, 0, stride});
}

// --------------------------------------------------------------- resampling

/// Indices of a uniform draw of n points: without replacement when n fits in
/// the cloud, with replacement otherwise.
inline std::vector<std::size_t> resample_indices(std::size_t count, std::size_t n, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("cannot resample an empty cloud");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx;
  if (n <= count) {
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i) idx.push_back(pick(rng));
  }
  return idx;
}

inline PointCloud resample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  const auto idx = resample_indices(cloud.size(), n, seed);
  Points out(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = cloud.point(idx[i]);
  return PointCloud(std::move(out), cloud.time);
}

inline LabeledPointCloud resample(const LabeledPointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.labels.size() != cloud.cloud.size()) throw ShapeError("label count must equal the point count");
  const auto idx = resample_indices(cloud.cloud.size(), n, seed);
  LabeledPointCloud out{PointCloud(Points(3, static_cast<Eigen::Index>(n)), cloud.cloud.time), {}};
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.cloud.points.col(static_cast<Eigen::Index>(i)) = cloud.cloud.point(idx[i]);
    out.labels.push_back(cloud.labels[idx[i]]);
  }
  return out;
}

// --------------------------------------------------------- synthetic scenes

enum class BodyShape { box, sphere, cylinder };

struct Trajectory {
  enum class Kind { polynomial, arc };
  Kind kind = Kind::polynomial;
  /// Per-axis offset c0 + c1 t + c2 t^2 + c3 t^3 (row = axis).
  std::array<std::array<double, 4>, 3> coeffs{};
  /// Arc: the body rides rigidly on a circle about the z axis through
  /// `center`, its origin at distance `radius`, turning by angle(t) =
  /// phase + angular_velocity * t (radians).
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  double angular_velocity = 0.0;
  double phase = 0.0;

  [[nodiscard]] Vec3 offset(double t) const {
    Vec3 o;
    for (int a = 0; a < 3; ++a) {
      const auto& c = coeffs[static_cast<std::size_t>(a)];
      o[a] = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    }
    return o;
  }

  /// Body-frame points to world coordinates at time t.
  [[nodiscard]] Points apply(const Points& local, double t) const {
    if (kind == Kind::polynomial) return local.colwise() + offset(t);
    const double a = phase + angular_velocity * t;
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
    Points shifted = local;
    shifted.row(0).array() += radius;
    return (rot * shifted).colwise() + center;
  }
};

struct BodySpec {
  BodyShape shape = BodyShape::box;
  /// box: half extents; sphere: size[0] is the radius; cylinder: radius
  /// size[0], half height size[2].
  Vec3 size = Vec3::Constant(0.5);
  std::size_t points = 512;
  int label = 0;
  Trajectory trajectory;
};

struct SyntheticSceneSpec {
  std::vector<BodySpec> bodies;
  std::vector<double> times{0.0, 1.0, 2.0, 3.0};
  double noise_sigma = 0.0;

  void validate() const {
    if (bodies.empty()) throw std::invalid_argument("scene needs at least one body");
    if (times.empty()) throw std::invalid_argument("scene needs at least one frame time");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    for (const auto& b : bodies) {
      if (b.points < 1) throw std::invalid_argument("every body needs at least one point");
      if (!(b.size.minCoeff() > 0.0) && b.shape == BodyShape::box)
        throw std::invalid_argument("box half extents must be positive");
      if (!(b.size[0] > 0.0)) throw std::invalid_argument("body radius must be positive");
      if (b.shape == BodyShape::cylinder && !(b.size[2] > 0.0))
        throw std::invalid_argument("cylinder half height must be positive");
    }
  }
};

namespace detail {

inline Points sample_surface(const BodySpec& body, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(body.points);
  Points p(3, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  switch (body.shape) {
    case BodyShape::box: {
      const Vec3 h = body.size;
      const std::array<double, 3> area{h[1] * h[2], h[0] * h[2], h[0] * h[1]};
      std::discrete_distribution<int> axis(area.begin(), area.end());
      std::bernoulli_distribution side(0.5);
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 x(u(rng), u(rng), u(rng));
        x[axis(rng)] = side(rng) ? 1.0 : -1.0;
        p.col(i) = x.cwiseProduct(h);
      }
      break;
    }
    case BodyShape::sphere:
      for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 x(g(rng), g(rng), g(rng));
        while (x.norm() < 1e-12) x = Vec3(g(rng), g(rng), g(rng));
        p.col(i) = body.size[0] * x.normalized();
      }
      break;
    case BodyShape::cylinder: {
      const double r = body.size[0], hh = body.size[2];
      const double lateral = 2.0 * r * hh * 2.0;  // 2 pi r (2 hh), shared factor pi dropped
      const double caps = r * r;                  // 2 pi r^2, same factor
      std::bernoulli_distribution on_side(lateral / (lateral + caps));
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = angle(rng);
        if (on_side(rng)) {
          p.col(i) = Vec3(r * std::cos(a), r * std::sin(a), hh * u(rng));
        } else {
          const double rho = r * std::sqrt(unit(rng));
          p.col(i) = Vec3(rho * std::cos(a), rho * std::sin(a), unit(rng) < 0.5 ? -hh : hh);
        }
      }
      break;
    }
  }
  return p;
}

}  // namespace detail

/// Sampled frames of a scene plus the closed-form positions behind them.
/// Point order is body by body, the same in every frame.
struct SyntheticScene {
  SyntheticSceneSpec spec;
  std::vector<Points> body_points;  // body frame
  std::vector<PointCloud> frames;   // noisy samples at spec.times
  std::vector<int> labels;

  /// Noiseless positions at any time.
  [[nodiscard]] PointCloud ground_truth(double t) const {
    Eigen::Index total = 0;
    for (const auto& b : body_points) total += b.cols();
    Points out(3, total);
    Eigen::Index at = 0;
    for (std::size_t b = 0; b < body_points.size(); ++b) {
      out.middleCols(at, body_points[b].cols()) = spec.bodies[b].trajectory.apply(body_points[b], t);
      at += body_points[b].cols();
    }
    return PointCloud(std::move(out), t);
  }

  [[nodiscard]] LabeledPointCloud labeled_frame(std::size_t i) const { return {frames.at(i), labels}; }
};

inline SyntheticScene generate_scene(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticScene scene;
  scene.spec = spec;
  std::mt19937_64 rng(seed);
  for (const auto& body : spec.bodies) {
    scene.body_points.push_back(detail::sample_surface(body, rng));
    scene.labels.insert(scene.labels.end(), body.points, body.label);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double t : spec.times) {
    auto frame = scene.ground_truth(t);
    if (spec.noise_sigma > 0.0)
      for (Eigen::Index i = 0; i < frame.points.size(); ++i) frame.points.data()[i] += spec.noise_sigma * noise(rng);
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

/// Scene description as JSON:
///   {"times": [0,1,2,3] | "frames": 4, "noise": 0.0,
///    "bodies": [{"shape": "box", "size": [hx,hy,hz], "points": 512, "label": 0,
///                "trajectory": {"type": "polynomial", "coeffs": [[c0,c1,c2,c3], [...], [...]]}
///                            | {"type": "arc", "center": [x,y,z], "radius": 1,
///                               "omega_deg": 10, "phase_deg": 0}}]}
inline SyntheticSceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SyntheticSceneSpec spec;
  if (j.contains("times")) {
    spec.times = j.at("times").get<std::vector<double>>();
  } else if (j.contains("frames")) {
    spec.times.clear();
    for (int i = 0; i < j.at("frames").get<int>(); ++i) spec.times.push_back(i);
  }
  spec.noise_sigma = j.value("noise", 0.0);
  for (const auto& jb : j.at("bodies")) {
    BodySpec b;
    const auto shape = jb.value("shape", std::string("box"));
    if (shape == "box") b.shape = BodyShape::box;
    else if (shape == "sphere") b.shape = BodyShape::sphere;
    else if (shape == "cylinder") b.shape = BodyShape::cylinder;
    else throw std::invalid_argument("unknown body shape '" + shape + "'");
    if (jb.contains("size")) {
      const auto s = jb.at("size").get<std::vector<double>>();
      if (s.size() == 1) b.size = Vec3::Constant(s[0]);
      else if (s.size() == 3) b.size = Vec3(s[0], s[1], s[2]);
      else throw std::invalid_argument("body size takes 1 or 3 values");
    }
    b.points = jb.value("points", std::size_t{512});
    b.label = jb.value("label", 0);
    if (jb.contains("trajectory")) {
      const auto& jt = jb.at("trajectory");
      const auto type = jt.value("type", std::string("polynomial"));
      if (type == "polynomial") {
        const auto rows = jt.value("coeffs", std::vector<std::vector<double>>{});
        if (rows.size() > 3) throw std::invalid_argument("polynomial trajectory has 3 axes");
        for (std::size_t a = 0; a < rows.size(); ++a) {
          if (rows[a].size() > 4) throw std::invalid_argument("polynomial trajectory is at most cubic");
          for (std::size_t k = 0; k < rows[a].size(); ++k) b.trajectory.coeffs[a][k] = rows[a][k];
        }
      } else if (type == "arc") {
        b.trajectory.kind = Trajectory::Kind::arc;
        const auto c = jt.value("center", std::vector<double>{0, 0, 0});
        if (c.size() != 3) throw std::invalid_argument("arc center takes 3 values");
        b.trajectory.center = Vec3(c[0], c[1], c[2]);
        b.trajectory.radius = jt.value("radius", 1.0);
        const double deg = std::numbers::pi / 180.0;
        b.trajectory.angular_velocity = jt.value("omega_deg", 0.0) * deg;
        b.trajectory.phase = jt.value("phase_deg", 0.0) * deg;
      } else {
        throw std::invalid_argument("unknown trajectory type '" + type + "'");
      }
    }
    spec.bodies.push_back(b);
  }
  spec.validate();
  return spec;
}

// ----------------------------------------------------------- hard samples

enum class TranslationMetric { rms, norm };

struct MotionMagnitude {
  double yaw_degrees = 0.0;
  double translation = 0.0;
  bool degenerate = false;  // pitch at +-90 degrees
};

/// |yaw| from a Z-Y-X decomposition R = Rz(yaw) Ry(pitch) Rx(roll), and the
/// translation size as component RMS sqrt(|t|^2 / 3) or as the plain norm.
inline MotionMagnitude motion_magnitude(const RigidPose& pose, TranslationMetric metric = TranslationMetric::rms) {
  if (!pose.is_valid()) throw std::invalid_argument("pose rotation is not a proper rotation");
  const auto& r = pose.rotation;
  MotionMagnitude m;
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  double yaw = 0.0;
  if (cos_pitch < 1e-9) {
    m.degenerate = true;
    yaw = std::atan2(-r(0, 1), r(1, 1));  // roll folded into yaw
  } else {
    yaw = std::atan2(r(1, 0), r(0, 0));
  }
  m.yaw_degrees = std::abs(yaw) * 180.0 / std::numbers::pi;
  const double sq = pose.translation.squaredNorm();
  m.translation = metric == TranslationMetric::rms ? std::sqrt(sq / 3.0) : std::sqrt(sq);
  return m;
}

struct SampleCandidate {
  std::string scene;
  std::size_t window = 0;
  /// Relative poses between consecutive input frames.
  std::vector<RigidPose> pose_pairs;
};

struct SelectionConfig {
  double yaw_threshold_degrees = 5.0;
  double translation_threshold = 2.5;
  std::size_t top_k = 0;  // per scene and per ranking; 0 keeps every candidate
  TranslationMetric metric = TranslationMetric::rms;
};

struct CandidateScore {
  double max_yaw = 0.0;
  double max_translation = 0.0;
};

inline CandidateScore score_candidate(const SampleCandidate& c, TranslationMetric metric) {
  CandidateScore s;
  for (const auto& p : c.pose_pairs) {
    const auto m = motion_magnitude(p, metric);
    s.max_yaw = std::max(s.max_yaw, m.yaw_degrees);
    s.max_translation = std::max(s.max_translation, m.translation);
  }
  return s;
}

/// Candidates (input order) that rank in a scene's top-k by yaw or by
/// translation and exceed either threshold.
inline std::vector<std::size_t> select_hard_samples(const std::vector<SampleCandidate>& candidates,
                                                    const SelectionConfig& cfg = {}) {
  std::vector<CandidateScore> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(score_candidate(c, cfg.metric));

  std::map<std::string, std::vector<std::size_t>> by_scene;
  for (std::size_t i = 0; i < candidates.size(); ++i) by_scene[candidates[i].scene].push_back(i);

  std::vector<bool> keep(candidates.size(), false);
  for (auto& [scene, members] : by_scene) {
    const std::size_t k = cfg.top_k == 0 ? members.size() : std::min(cfg.top_k, members.size());
    auto take_top = [&](auto key) {
      auto ranked = members;
      std::stable_sort(ranked.begin(), ranked.end(),
                       [&](std::size_t a, std::size_t b) { return key(scores[a]) > key(scores[b]); });
      for (std::size_t r = 0; r < k; ++r) keep[ranked[r]] = true;
    };
    take_top([](const CandidateScore& s) { return s.max_yaw; });
    take_top([](const CandidateScore& s) { return s.max_translation; });
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!keep[i]) continue;
    if (scores[i].max_yaw >= cfg.yaw_threshold_degrees || scores[i].max_translation >= cfg.translation_threshold)
      out.push_back(i);
  }
  return out;
}

/// Candidate windows over a scene's world poses, laid out like make_windows.
inline std::vector<SampleCandidate> candidates_from_poses(const std::string& scene,
                                                          const std::vector<RigidPose>& world_poses,
                                                          const WindowSpec& spec) {
  std::vector<SampleCandidate> out;
  const std::size_t step = spec.step();
  const std::size_t span = (spec.frames - 1) * step + 1;
  std::size_t id = 0;
  for (std::size_t start = 0; start + span <= world_poses.size(); start += spec.stride, ++id) {
    SampleCandidate c{scene, id, {}};
    for (std::size_t k = 0; k + 1 < spec.frames; ++k)
      c.pose_pairs.push_back(relative_pose(world_poses[start + k * step], world_poses[start + (k + 1) * step]));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace neuralpci
