#pragma once

// Per-window runtime optimization of a neural field and the interpolation /
// extrapolation entry points built on it.

#include "neuralpci/field.hpp"
#include "neuralpci/losses.hpp"
#include "neuralpci/types.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace neuralpci {

struct FitConfig {
  int max_iters = 1000;
  double lr = 1e-3;
  /// Multiplicative lr decay applied after every step (1 keeps lr constant).
  double lr_decay = 1.0;
  std::uint64_t seed = 0;
  LossConfig loss;
  FieldConfig field;
  int log_every = 1;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
    if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
    loss.validate();
    field.validate();
  }
};

struct FitRecord {
  int iteration = 0;
  LossBreakdown loss;
  double ms = 0.0;
};

struct FitReport {
  std::vector<FitRecord> history;
  LossBreakdown final_loss;  // evaluated after the last update
  double total_ms = 0.0;
  bool lr_halved = false;
};

/// A fitted field together with the coordinate frame it was fitted in.
struct FitResult {
  NeuralField field;
  Normalization normalization;
  std::vector<double> times;  // field-axis time of each input frame
  FitReport report;
};

/// Input frames sit at integer times 0, 1, ..., M-1 on the field's time axis.
inline std::vector<double> normalized_times(std::size_t frame_count) {
  std::vector<double> t(frame_count);
  for (std::size_t i = 0; i < frame_count; ++i) t[i] = static_cast<double>(i);
  return t;
}

inline LossContext make_loss_context(const InputWindow& window, const Normalization& norm,
                                     const LossConfig& cfg) {
  std::vector<Points> frames;
  frames.reserve(window.size());
  for (const auto& f : window.frames) frames.push_back(norm.to_field(f.points));
  return LossContext::build(std::move(frames), normalized_times(window.size()), cfg);
}

/// Window-level objective in the window's normalized frame.
inline TotalLoss total_loss(const NeuralField& field, const InputWindow& window, const LossConfig& cfg) {
  validate_window(window);
  return total_loss(field, make_loss_context(window, Normalization::of(window), cfg), cfg);
}

inline FitResult fit(const InputWindow& window, const FitConfig& config) {
  config.validate();
  validate_window(window);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  FitResult out;
  out.normalization = Normalization::of(window);
  out.times = normalized_times(window.size());
  const auto ctx = make_loss_context(window, out.normalization, config.loss);
  out.field = make_field(config.field, config.seed, config.lr);
  auto& field = out.field;

  double initial_total = 0.0;
  for (int it = 0; it < config.max_iters; ++it) {
    const auto t0 = clock::now();
    auto tl = total_loss(field, ctx, config.loss);
    const double total = tl.breakdown.total;
    if (!std::isfinite(total))
      throw NumericError("non-finite loss at iteration " + std::to_string(it));
    if (it == 0) {
      initial_total = total;
    } else if (total > 10.0 * initial_total) {
      if (out.report.lr_halved)
        throw NumericError("optimization diverged at iteration " + std::to_string(it) +
                           " (loss " + std::to_string(total) + ")");
      out.report.lr_halved = true;
      field.adam.lr *= 0.5;
    }
    autodiff::adam_step(field.layers, tl.grads, field.adam);
    field.adam.lr *= config.lr_decay;
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (it % config.log_every == 0) {
      tl.breakdown.pairs.shrink_to_fit();
      out.report.history.push_back({it, std::move(tl.breakdown), ms});
    }
  }
  auto last = total_loss(field, ctx, config.loss);
  if (!std::isfinite(last.breakdown.total))
    throw NumericError("non-finite loss at iteration " + std::to_string(config.max_iters));
  out.report.final_loss = std::move(last.breakdown);
  out.report.total_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
  return out;
}

namespace detail {

inline PointCloud predict(const NeuralField& field, const Normalization& norm, const InputWindow& window,
                          const std::vector<double>& times, std::size_t reference, double query) {
  const PointCloud ref(norm.to_field(window.frames[reference].points), times[reference]);
  auto pred = field_forward(field, ref, times[reference], query);
  return PointCloud(norm.to_world(pred.points), query);
}

}  // namespace detail

/// Clouds at each query time (field time axis), each pushed from the input
/// frame nearest in time.
inline std::vector<PointCloud> interpolate(const NeuralField& field, const InputWindow& window,
                                           std::span<const double> query_times) {
  validate_window(window);
  const auto norm = Normalization::of(window);
  const auto times = normalized_times(window.size());
  std::vector<PointCloud> out;
  out.reserve(query_times.size());
  for (double q : query_times) {
    if (!std::isfinite(q)) throw std::invalid_argument("query times must be finite");
    out.push_back(detail::predict(field, norm, window, times, select_reference(times, q), q));
  }
  return out;
}

inline std::vector<PointCloud> interpolate(const FitResult& fitted, const InputWindow& window,
                                           std::span<const double> query_times) {
  return interpolate(fitted.field, window, query_times);
}

/// Frames at t_{M-1} + 1, ..., t_{M-1} + horizon pushed from the last input.
inline std::vector<PointCloud> extrapolate(const NeuralField& field, const InputWindow& window, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  validate_window(window);
  const auto norm = Normalization::of(window);
  const auto times = normalized_times(window.size());
  std::vector<PointCloud> out;
  for (int h = 1; h <= horizon; ++h)
    out.push_back(detail::predict(field, norm, window, times, window.size() - 1, times.back() + h));
  return out;
}

/// n equally spaced times strictly between the two middle inputs of a window
/// with `frame_count` frames, e.g. (1.25, 1.5, 1.75) for n = 3, M = 4.
inline std::vector<double> intermediate_times(int n, std::size_t frame_count = 4) {
  if (n < 1) throw std::invalid_argument("need at least one intermediate frame");
  if (frame_count < 2) throw std::invalid_argument("need at least two frames");
  const double lo = static_cast<double>((frame_count - 1) / 2);
  std::vector<double> t;
  for (int k = 1; k <= n; ++k) t.push_back(lo + static_cast<double>(k) / (n + 1));
  return t;
}

/// Fits many windows on `jobs` worker threads; results keep window order.
inline std::vector<FitResult> fit_many(const std::vector<InputWindow>& windows, const FitConfig& config,
                                       int jobs = 1) {
  std::vector<FitResult> results(windows.size());
  std::vector<std::exception_ptr> errors(windows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < windows.size(); i = next++) {
      try {
        results[i] = fit(windows[i], config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::max(1, jobs));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(n_workers, windows.size()); ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// One line per logged iteration: iteration cd emd smooth total ms.
inline void write_fit_log(std::ostream& os, const FitReport& report) {
  os << "# iteration cd emd smooth total ms\n";
  os.precision(17);
  for (const auto& r : report.history)
    os << r.iteration << ' ' << r.loss.cd << ' ' << r.loss.emd << ' ' << r.loss.smooth << ' ' << r.loss.total
       << ' ' << r.ms << '\n';
}

inline nlohmann::json to_json(const LossBreakdown& b, bool with_pairs = false) {
  nlohmann::json j{{"cd", b.cd}, {"emd", b.emd}, {"smooth", b.smooth}, {"total", b.total}};
  if (with_pairs) {
    auto& pairs = j["pairs"] = nlohmann::json::array();
    for (const auto& p : b.pairs)
      pairs.push_back({{"reference", p.reference}, {"target", p.target}, {"cd", p.cd}, {"emd", p.emd},
                       {"smooth", p.smooth}, {"total", p.total}});
  }
  return j;
}

inline nlohmann::json fit_summary(const FitReport& report) {
  nlohmann::json j;
  j["iterations_logged"] = report.history.size();
  if (!report.history.empty()) j["initial"] = to_json(report.history.front().loss, true);
  j["final"] = to_json(report.final_loss, true);
  j["lr_halved"] = report.lr_halved;
  j["total_ms"] = report.total_ms;
  return j;
}

}  // namespace neuralpci
