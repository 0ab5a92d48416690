#pragma once

// Label transfer for auto-labeling and shape morphing on top of fitted fields.

#include "neuralpci/optimize.hpp"
#include "neuralpci/spatial.hpp"
#include "neuralpci/types.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace neuralpci {

/// Majority label among the k nearest labeled points; tied votes are settled
/// by the nearest point carrying one of the tied labels.
inline LabeledPointCloud transfer_labels(const LabeledPointCloud& labeled, const PointCloud& target,
                                         std::size_t k = 5) {
  if (labeled.cloud.empty()) throw std::invalid_argument("label source cloud is empty");
  if (labeled.labels.size() != labeled.cloud.size())
    throw ShapeError("label count must equal the source point count");
  if (k < 1) throw std::invalid_argument("label transfer needs k >= 1");
  const NeighborIndex index(labeled.cloud.points);
  const std::size_t kk = std::min(k, index.size());
  LabeledPointCloud out{target, std::vector<int>(target.size(), 0)};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto nn = index.knn(target.point(i), kk);
    std::map<int, std::size_t> votes;
    std::size_t top = 0;
    for (const auto& n : nn) top = std::max(top, ++votes[labeled.labels[n.index]]);
    // Among the labels with the top count, the one held by the nearest point wins.
    for (const auto& n : nn) {
      if (votes[labeled.labels[n.index]] == top) {
        out.labels[i] = labeled.labels[n.index];
        break;
      }
    }
  }
  return out;
}

/// Interpolates `n` frames between a source and target shape by fitting a
/// field on the two-frame window (times 0 and 1).
inline std::vector<PointCloud> morph_sequence(const PointCloud& source, const PointCloud& target, int steps,
                                              const FitConfig& config, FitResult* fitted = nullptr) {
  if (steps < 1) throw std::invalid_argument("morphing needs at least one step");
  if (source.size() != target.size()) throw ShapeError("morph source and target must have equal counts");
  InputWindow window{{PointCloud(source.points, 0.0), PointCloud(target.points, 1.0)}};
  auto result = fit(window, config);
  std::vector<double> times;
  for (int s = 1; s <= steps; ++s) times.push_back(static_cast<double>(s) / (steps + 1));
  auto out = interpolate(result.field, window, times);
  if (fitted) *fitted = std::move(result);
  return out;
}

/// Labels unannotated frames from labeled keyframes: a field fitted on the
/// keyframes predicts each target time from the nearest keyframe (so the
/// prediction inherits that keyframe's labels in order), then kNN transfers
/// the labels onto the real target points. Target `time` is on the field's
/// time axis (keyframe i sits at time i).
inline std::vector<LabeledPointCloud> autolabel(const std::vector<LabeledPointCloud>& keyframes,
                                                const std::vector<PointCloud>& targets, const FitConfig& config,
                                                std::size_t k = 5, FitResult* fitted = nullptr) {
  InputWindow window;
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    if (keyframes[i].labels.size() != keyframes[i].cloud.size())
      throw ShapeError("keyframe " + std::to_string(i) + " label count does not match its points");
    window.frames.emplace_back(keyframes[i].cloud.points, static_cast<double>(i));
  }
  auto result = fit(window, config);
  std::vector<LabeledPointCloud> out;
  out.reserve(targets.size());
  for (const auto& target : targets) {
    const double q[] = {target.time};
    auto predicted = interpolate(result.field, window, q).front();
    const auto ref = select_reference(result.times, target.time);
    out.push_back(transfer_labels({std::move(predicted), keyframes[ref].labels}, target, k));
  }
  if (fitted) *fitted = std::move(result);
  return out;
}

}  // namespace neuralpci
