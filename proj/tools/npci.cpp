// npci: fit, interpolate, extrapolate, evaluate and generate point cloud
// sequences from the command line. Every run writes manifest.json into its
// output directory; `npci replay --manifest <file>` re-executes it.

#include "neuralpci/neuralpci.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace neuralpci;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Wrong combination of arguments; reported with exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// ------------------------------------------------------------ shared state

struct Common {
  std::uint64_t seed = 0;
  std::string format = "xyz";
  std::string out_dir = "npci_out";
  int jobs = 1;

  void add(CLI::App& app) {
    app.add_option("--seed", seed, "Random seed for initialization and sampling")->capture_default_str();
    app.add_option("--format", format, "Output cloud format: xyz, bin or ply")
        ->check(CLI::IsMember({"xyz", "bin", "ply"}))
        ->capture_default_str();
    app.add_option("--out-dir", out_dir, "Directory for all outputs")->capture_default_str();
    app.add_option("--jobs", jobs, "Worker threads for multi-window commands")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.set_config("--config", "", "Flat key = value file supplying option values");
  }
};

struct FitOptions {
  int iters = 1000;
  double lr = 1e-3;
  double lr_decay = 1.0;
  int width = 512;
  int depth = 8;
  int pe = 0;
  int inject = -1;
  double final_scale = 1e-2;
  bool encode_time = false;
  double time_scale = 1.0;
  std::string preset = "indoor";
  std::vector<double> weights;
  int smooth_k = 9;
  std::string emd = "auto";
  double emd_eps = 1e-3;
  bool skip_self = false;
  std::size_t points = 0;

  void add(CLI::App& app) {
    app.add_option("--iters", iters, "Optimization iterations (>= 1)")
        ->check(CLI::Range(1, std::numeric_limits<int>::max()))
        ->capture_default_str();
    app.add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lr-decay", lr_decay, "Per-iteration learning-rate factor")->capture_default_str();
    app.add_option("--width", width, "Hidden units per layer")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--depth", depth, "Hidden layers")->check(CLI::Range(2, 64))->capture_default_str();
    app.add_option("--pe", pe, "Positional encoding order")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_option("--inject", inject, "Layer receiving the query time (-1: last hidden)")->capture_default_str();
    app.add_option("--final-scale", final_scale, "Output layer init scale")->capture_default_str();
    app.add_flag("--encode-time", encode_time, "Positionally encode the query time");
    app.add_option("--time-scale", time_scale, "Network time units per input frame step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--preset", preset, "Loss weight preset")
        ->check(CLI::IsMember({"indoor", "outdoor"}))
        ->capture_default_str();
    app.add_option("--weights", weights, "Loss weights alpha,beta,gamma (overrides --preset)")
        ->delimiter(',')
        ->expected(3);
    app.add_option("--smooth-k", smooth_k, "Smoothness neighborhood size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--emd", emd, "EMD solver: auto, exact or approx")
        ->check(CLI::IsMember({"auto", "exact", "approx"}))
        ->capture_default_str();
    app.add_option("--emd-eps", emd_eps, "Sinkhorn final epsilon relative to mean cost")->capture_default_str();
    app.add_flag("--skip-self", skip_self, "Leave the i = j pairs out of the loss");
    app.add_option("--points", points, "Resample every input to this many points (0 keeps counts)")
        ->capture_default_str();
  }

  [[nodiscard]] LossConfig loss() const {
    LossConfig l = preset == "outdoor" ? LossConfig::outdoor() : LossConfig::indoor();
    if (!weights.empty()) {
      l.alpha = weights[0];
      l.beta = weights[1];
      l.gamma = weights[2];
    }
    l.smooth_k = smooth_k;
    l.emd_mode = emd == "exact" ? EmdMode::exact : emd == "approx" ? EmdMode::approximate : EmdMode::automatic;
    l.emd_epsilon = emd_eps;
    l.include_self_pairs = !skip_self;
    return l;
  }

  [[nodiscard]] FitConfig config(std::uint64_t seed) const {
    FitConfig c;
    c.max_iters = iters;
    c.lr = lr;
    c.lr_decay = lr_decay;
    c.seed = seed;
    c.loss = loss();
    c.field.width = width;
    c.field.depth = depth;
    c.field.pe_order = pe;
    c.field.time_injection_layer = inject;
    c.field.final_layer_scale = final_scale;
    c.field.encode_query_time = encode_time;
    c.field.time_scale = time_scale;
    c.log_every = 1;
    c.validate();
    return c;
  }
};

/// Tracks files read and written so the manifest can list them.
struct Run {
  std::string command;
  Common common;
  fs::path dir;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json extra = json::object();

  [[nodiscard]] CloudFormat format() const { return parse_format(common.format); }

  PointCloud read_cloud(const std::string& path, double time) {
    inputs.push_back(path);
    auto c = load_cloud(path);
    c.time = time;
    return c;
  }

  std::vector<int> read_labels(const std::string& path) {
    inputs.push_back(path);
    return load_labels(path);
  }

  std::string path_for(const std::string& name) {
    const auto p = (dir / name).string();
    outputs.push_back(p);
    return p;
  }

  void write_cloud(const PointCloud& cloud, const std::string& stem) {
    if (!cloud.points.allFinite()) throw NumericError("non-finite coordinates in output " + stem);
    save_cloud(cloud, path_for(stem + format_extension(format())), format());
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream os(path_for(name), std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + name);
    os << text;
  }
};

std::string indexed(const std::string& stem, std::size_t i) {
  std::ostringstream ss;
  ss << stem << '_' << std::setw(2) << std::setfill('0') << i;
  return ss.str();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

std::vector<PointCloud> read_frames(Run& run, const std::vector<std::string>& paths, std::vector<double> times,
                                    std::size_t points) {
  if (!times.empty() && times.size() != paths.size())
    throw UsageError("--times needs one value per input");
  std::vector<PointCloud> frames;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto c = run.read_cloud(paths[i], times.empty() ? static_cast<double>(i) : times[i]);
    if (points > 0) c = resample(c, points, run.common.seed + i);
    frames.push_back(std::move(c));
  }
  return frames;
}

InputWindow window_of(std::vector<PointCloud> frames) {
  InputWindow w{std::move(frames)};
  const auto n = w.frames.front().size();
  for (const auto& f : w.frames)
    if (f.size() != n) throw UsageError("input point counts differ; pass --points to resample");
  validate_window(w);
  return w;
}

FitResult run_fit(Run& run, const InputWindow& window, const FitConfig& cfg) {
  std::cerr << "[" << run.command << "] fitting " << window.size() << " frames x " << window.frames[0].size()
            << " points, " << cfg.max_iters << " iterations\n";
  auto result = fit(window, cfg);
  const auto& f = result.report.final_loss;
  std::cerr << "[" << run.command << "] final loss " << f.total << " (cd " << f.cd << ", emd " << f.emd
            << ", smooth " << f.smooth << ")" << (result.report.lr_halved ? ", lr halved once" : "") << "\n";
  std::ostringstream log;
  write_fit_log(log, result.report);
  run.write_text("fit_log.txt", log.str());
  return result;
}

// ----------------------------------------------------------------- commands

struct InterpArgs {
  std::vector<std::string> inputs;
  std::vector<double> times;
  int n = 3;
  bool checkpoint = false;
};

void cmd_interp(Run& run, const InterpArgs& a, const FitOptions& fo) {
  if (a.inputs.size() < 2) throw UsageError("interp needs at least 2 --inputs");
  const auto window = window_of(read_frames(run, a.inputs, a.times, fo.points));
  const auto cfg = fo.config(run.common.seed);
  auto result = run_fit(run, window, cfg);
  const auto queries = intermediate_times(a.n, window.size());
  const auto clouds = interpolate(result, window, queries);
  for (std::size_t k = 0; k < clouds.size(); ++k) run.write_cloud(clouds[k], indexed("interp", k));
  json report = fit_summary(result.report);
  report["query_times"] = queries;
  run.write_text("fit_report.json", report.dump(2) + "\n");
  if (a.checkpoint) save_checkpoint(run.path_for("field.npf"), result.field, result.normalization);
}

struct ExtrapArgs {
  std::vector<std::string> inputs;
  std::vector<double> times;
  int horizon = 4;
};

void cmd_extrap(Run& run, const ExtrapArgs& a, const FitOptions& fo) {
  if (a.inputs.size() < 2) throw UsageError("extrap needs at least 2 --inputs");
  if (a.horizon < 1) throw UsageError("--horizon must be >= 1");
  const auto window = window_of(read_frames(run, a.inputs, a.times, fo.points));
  auto result = run_fit(run, window, fo.config(run.common.seed));
  const auto clouds = extrapolate(result.field, window, a.horizon);
  for (std::size_t k = 0; k < clouds.size(); ++k) run.write_cloud(clouds[k], indexed("extrap", k));
  json report = fit_summary(result.report);
  report["horizon"] = a.horizon;
  run.write_text("fit_report.json", report.dump(2) + "\n");
}

struct BaselineArgs {
  std::string mode = "linear";
  std::vector<std::string> inputs;
  std::vector<std::string> flows;
  std::vector<double> t;
  int n = 1;
  std::string corr = "index";
  std::size_t n_out = 0;
};

std::vector<double> baseline_times(const BaselineArgs& a) {
  if (!a.t.empty()) return a.t;
  if (a.n < 1) throw UsageError("--n must be >= 1");
  std::vector<double> t;
  for (int k = 1; k <= a.n; ++k) t.push_back(static_cast<double>(k) / (a.n + 1));
  return t;
}

void cmd_baseline(Run& run, const BaselineArgs& a, const FitOptions& fo) {
  if (a.mode == "linear" || a.mode == "quadratic" || a.mode == "cubic") {
    if (a.inputs.size() != 4) throw UsageError("explicit " + a.mode + " order needs exactly 4 --inputs");
    const auto window = window_of(read_frames(run, a.inputs, {}, fo.points));
    CorrespondenceSet c;
    if (a.corr == "field") {
      const auto result = run_fit(run, window, fo.config(run.common.seed));
      c = correspondences_from_field(result.field, window);
    } else {
      c = correspondences_from_order(window);
    }
    const auto order = a.mode == "linear"      ? MotionOrder::linear
                       : a.mode == "quadratic" ? MotionOrder::quadratic
                                               : MotionOrder::cubic;
    const auto times = baseline_times(a);
    for (std::size_t k = 0; k < times.size(); ++k)
      run.write_cloud(explicit_interpolate(c, times[k], order), indexed(a.mode, k));
    run.extra["t"] = times;
  } else if (a.mode == "flow") {
    if (a.inputs.size() != 2 || a.flows.size() != 2)
      throw UsageError("flow mode needs 2 --inputs and 2 --flows (forward, backward)");
    const auto p0 = run.read_cloud(a.inputs[0], 0.0), p1 = run.read_cloud(a.inputs[1], 1.0);
    const auto ff = run.read_cloud(a.flows[0], 0.0), fb = run.read_cloud(a.flows[1], 1.0);
    const auto times = baseline_times(a);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto w = scene_flow_warp(p0.points, p1.points, ff.points, fb.points, times[k]);
      run.write_cloud(w.forward, indexed("flow_fwd", k));
      run.write_cloud(w.backward, indexed("flow_bwd", k));
    }
    run.extra["t"] = times;
  } else if (a.mode == "fuse-random" || a.mode == "fuse-nn") {
    if (a.inputs.empty()) throw UsageError(a.mode + " needs prediction --inputs");
    std::vector<PointCloud> clouds;
    for (const auto& p : a.inputs) clouds.push_back(run.read_cloud(p, 0.0));
    if (a.mode == "fuse-nn") {
      if (clouds.size() < 2) throw UsageError("fuse-nn needs at least 2 --inputs");
      run.write_cloud(fuse_nn(clouds), "fused");
    } else {
      const auto n_out = a.n_out > 0 ? a.n_out : clouds.front().size();
      run.write_cloud(fuse_random(clouds, n_out, run.common.seed), "fused");
    }
  } else {
    throw UsageError("unknown baseline mode '" + a.mode + "'");
  }
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::vector<std::string> sequence;
  std::vector<int> intervals;
  int between = 0;
  int stride = 1;
  int max_windows = 0;
  std::vector<std::string> methods{"neuralpci"};
  std::string metric_emd = "auto";
};

struct MetricRow {
  std::string window_id;
  std::size_t frame_slot = 0;
  double cd = 0.0;
  double emd = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_points = 0;
  int iters = 0;
  double wall_ms = 0.0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream ss;
  ss << "window_id,frame_slot,cd,emd,n_points,iters,wall_ms\n";
  for (const auto& r : rows)
    ss << r.window_id << ',' << r.frame_slot << ',' << num(r.cd) << ',' << num(r.emd) << ',' << r.n_points << ','
       << r.iters << ',' << num(r.wall_ms) << '\n';
  return ss.str();
}

struct Aggregate {
  double cd = 0.0, emd = 0.0;
  std::size_t n_cd = 0, n_emd = 0;

  void add(const MetricRow& r) {
    cd += r.cd;
    ++n_cd;
    if (!std::isnan(r.emd)) {
      emd += r.emd;
      ++n_emd;
    }
  }
  [[nodiscard]] double mean_cd() const { return n_cd ? cd / static_cast<double>(n_cd) : std::nan(""); }
  [[nodiscard]] double mean_emd() const { return n_emd ? emd / static_cast<double>(n_emd) : std::nan(""); }
};

/// CD and (when counts agree and it is not disabled) EMD of one pair.
MetricRow score_pair(const PointCloud& pred, const PointCloud& gt, const std::string& emd_mode) {
  MetricRow r;
  r.cd = chamfer(pred, gt).value;
  r.n_points = gt.size();
  if (emd_mode != "off") {
    if (pred.size() != gt.size()) {
      std::cerr << "[eval] warning: point counts differ (" << pred.size() << " vs " << gt.size()
                << "), EMD skipped for this pair\n";
    } else {
      LossConfig lc;
      lc.emd_mode = emd_mode == "exact" ? EmdMode::exact : emd_mode == "approx" ? EmdMode::approximate
                                                                                  : EmdMode::automatic;
      r.emd = emd(pred, gt, lc).value;
    }
  }
  return r;
}

void eval_pairs(Run& run, const EvalArgs& a) {
  if (a.pred.size() != a.gt.size() || a.pred.empty())
    throw UsageError("--pred and --gt need the same nonzero number of files");
  std::vector<MetricRow> rows;
  Aggregate agg;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = run.read_cloud(a.pred[i], 0.0);
    const auto g = run.read_cloud(a.gt[i], 0.0);
    auto r = score_pair(p, g, a.metric_emd);
    r.window_id = "0";
    r.frame_slot = i;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    agg.add(r);
    rows.push_back(r);
  }
  run.write_text("metrics.csv", metrics_csv(rows));
  std::ostringstream txt;
  txt << "pair  cd            emd\n";
  for (const auto& r : rows) txt << std::setw(4) << r.frame_slot << "  " << num(r.cd) << "  " << num(r.emd) << '\n';
  txt << "mean  " << num(agg.mean_cd()) << "  " << num(agg.mean_emd()) << "  (emd over " << agg.n_emd << " of "
      << agg.n_cd << " pairs)\n";
  run.write_text("summary.txt", txt.str());
  std::cerr << txt.str();
}

/// Interval sweep: for each interval k the inputs are k * (between + 1)
/// frames apart and the `between` frames evenly spaced between the middle
/// inputs are predicted and scored.
void eval_sweep(Run& run, const EvalArgs& a, const FitOptions& fo) {
  if (a.intervals.empty()) throw UsageError("the interval sweep needs --intervals");
  if (a.between < 1) throw UsageError("the interval sweep needs --between >= 1");
  for (const auto& m : a.methods)
    if (m != "neuralpci" && m != "linear" && m != "quadratic" && m != "cubic")
      throw UsageError("unknown sweep method '" + m + "'");
  const auto sequence = read_frames(run, a.sequence, {}, fo.points);
  const auto cfg = fo.config(run.common.seed);

  std::ostringstream sweep;
  sweep << "interval,method,cd,emd,windows\n";
  std::ostringstream txt;
  txt << "interval  method      cd            emd           windows\n";
  for (int k : a.intervals) {
    if (k < 1) throw UsageError("intervals must be >= 1");
    WindowSpec spec;
    spec.n_between = static_cast<std::size_t>(a.between);
    spec.interval = static_cast<std::size_t>(k) * (spec.n_between + 1);
    spec.stride = static_cast<std::size_t>(a.stride);
    auto windows = make_windows(sequence, spec);
    if (a.max_windows > 0 && windows.size() > static_cast<std::size_t>(a.max_windows))
      windows.resize(static_cast<std::size_t>(a.max_windows));
    if (windows.empty()) {
      std::cerr << "[eval] interval " << k << ": sequence too short, no windows\n";
      continue;
    }
    for (const auto& w : windows) validate_window(w.window);

    std::vector<FitResult> fits;
    if (std::find(a.methods.begin(), a.methods.end(), "neuralpci") != a.methods.end()) {
      std::vector<InputWindow> inputs;
      for (const auto& w : windows) inputs.push_back(w.window);
      std::cerr << "[eval] interval " << k << ": fitting " << inputs.size() << " windows\n";
      fits = fit_many(inputs, cfg, run.common.jobs);
    }
    for (const auto& method : a.methods) {
      std::vector<MetricRow> rows;
      Aggregate agg;
      for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const auto& w = windows[wi];
        std::vector<PointCloud> preds;
        int iters = 0;
        double wall = 0.0;
        if (method == "neuralpci") {
          preds = interpolate(fits[wi], w.window, w.truth_times);
          iters = cfg.max_iters;
          wall = fits[wi].report.total_ms;
        } else {
          const auto c = correspondences_from_order(w.window);
          const auto order = method == "linear" ? MotionOrder::linear
                             : method == "quadratic" ? MotionOrder::quadratic
                                                     : MotionOrder::cubic;
          const double lo = static_cast<double>((w.window.size() - 1) / 2);
          for (double t : w.truth_times) preds.push_back(explicit_interpolate(c, t - lo, order));
        }
        for (std::size_t s = 0; s < preds.size(); ++s) {
          auto r = score_pair(preds[s], w.ground_truth[s], a.metric_emd);
          r.window_id = "k" + std::to_string(k) + "_w" + std::to_string(wi);
          r.frame_slot = s;
          r.iters = iters;
          r.wall_ms = wall;
          agg.add(r);
          rows.push_back(r);
        }
      }
      run.write_text("metrics_" + method + "_k" + std::to_string(k) + ".csv", metrics_csv(rows));
      sweep << k << ',' << method << ',' << num(agg.mean_cd()) << ',' << num(agg.mean_emd()) << ','
            << windows.size() << '\n';
      txt << std::setw(8) << k << "  " << std::left << std::setw(10) << method << std::right << "  "
          << num(agg.mean_cd()) << "  " << num(agg.mean_emd()) << "  " << windows.size() << '\n';
    }
  }
  run.write_text("sweep.csv", sweep.str());
  run.write_text("summary.txt", txt.str());
  std::cerr << txt.str();
}

void cmd_eval(Run& run, const EvalArgs& a, const FitOptions& fo) {
  if (!a.sequence.empty()) {
    if (!a.pred.empty() || !a.gt.empty()) throw UsageError("use either --sequence or --pred/--gt");
    eval_sweep(run, a, fo);
  } else {
    eval_pairs(run, a);
  }
}

// ------------------------------------------------------------ applications

struct AutolabelArgs {
  std::vector<std::string> keyframes;
  std::vector<std::string> labels;
  std::vector<std::string> targets;
  std::vector<double> target_times;
  std::vector<std::string> truth_labels;
  std::size_t k = 5;
};

void cmd_autolabel(Run& run, const AutolabelArgs& a, const FitOptions& fo) {
  if (a.keyframes.size() < 2) throw UsageError("autolabel needs at least 2 --keyframes");
  if (a.labels.size() != a.keyframes.size()) throw UsageError("autolabel needs one --labels file per keyframe");
  if (a.targets.empty()) throw UsageError("autolabel needs --targets");
  if (a.target_times.size() != a.targets.size()) throw UsageError("--target-times needs one value per target");
  if (!a.truth_labels.empty() && a.truth_labels.size() != a.targets.size())
    throw UsageError("--truth-labels needs one file per target");
  if (fo.points > 0) throw UsageError("autolabel keeps keyframe point counts; --points is not supported");
  std::vector<LabeledPointCloud> keys;
  for (std::size_t i = 0; i < a.keyframes.size(); ++i)
    keys.push_back({run.read_cloud(a.keyframes[i], static_cast<double>(i)), run.read_labels(a.labels[i])});
  std::vector<PointCloud> targets;
  for (std::size_t i = 0; i < a.targets.size(); ++i) targets.push_back(run.read_cloud(a.targets[i], a.target_times[i]));
  const auto cfg = fo.config(run.common.seed);
  FitResult fitted;
  const auto out = autolabel(keys, targets, cfg, a.k, &fitted);
  std::ostringstream log;
  write_fit_log(log, fitted.report);
  run.write_text("fit_log.txt", log.str());
  json report = fit_summary(fitted.report);
  for (std::size_t i = 0; i < out.size(); ++i) {
    run.write_cloud(out[i].cloud, indexed("labeled", i));
    save_labels(out[i].labels, run.path_for(indexed("labels", i) + ".txt"));
    if (!a.truth_labels.empty()) {
      const auto truth = run.read_labels(a.truth_labels[i]);
      if (truth.size() != out[i].labels.size()) throw ShapeError("truth label count differs from target points");
      std::size_t hit = 0;
      for (std::size_t p = 0; p < truth.size(); ++p) hit += truth[p] == out[i].labels[p];
      const double acc = static_cast<double>(hit) / static_cast<double>(truth.size());
      report["accuracy"].push_back(acc);
      std::cerr << "[autolabel] target " << i << " accuracy " << acc << "\n";
    }
  }
  run.write_text("autolabel_report.json", report.dump(2) + "\n");
}

struct MorphArgs {
  std::string source;
  std::string target;
  int n = 8;
  bool endpoints = false;
};

void cmd_morph(Run& run, const MorphArgs& a, const FitOptions& fo) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  auto src = run.read_cloud(a.source, 0.0), dst = run.read_cloud(a.target, 1.0);
  if (fo.points > 0) {
    src = resample(src, fo.points, run.common.seed);
    dst = resample(dst, fo.points, run.common.seed + 1);
  }
  if (src.size() != dst.size()) throw UsageError("source and target counts differ; pass --points to resample");
  FitResult fitted;
  const auto frames = morph_sequence(src, dst, a.n, fo.config(run.common.seed), &fitted);
  std::ostringstream log;
  write_fit_log(log, fitted.report);
  run.write_text("fit_log.txt", log.str());
  std::size_t k = 0;
  const InputWindow window{{PointCloud(src.points, 0.0), PointCloud(dst.points, 1.0)}};
  if (a.endpoints) run.write_cloud(interpolate(fitted, window, std::vector<double>{0.0}).front(), indexed("morph", k++));
  for (const auto& f : frames) run.write_cloud(f, indexed("morph", k++));
  if (a.endpoints) run.write_cloud(interpolate(fitted, window, std::vector<double>{1.0}).front(), indexed("morph", k++));
  run.write_text("fit_report.json", fit_summary(fitted.report).dump(2) + "\n");
}

struct GenArgs {
  std::string spec;
  std::vector<double> gt_times;
};

void cmd_gen(Run& run, const GenArgs& a) {
  run.inputs.push_back(a.spec);
  std::ifstream is(a.spec);
  if (!is) throw UsageError("cannot open scene spec " + a.spec);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(a.spec + ": " + e.what());
  }
  const auto scene = generate_scene(scene_spec_from_json(j), run.common.seed);
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    run.write_cloud(scene.frames[i], indexed("frame", i));
    run.write_cloud(scene.ground_truth(scene.spec.times[i]), indexed("gt", i));
  }
  for (std::size_t i = 0; i < a.gt_times.size(); ++i) run.write_cloud(scene.ground_truth(a.gt_times[i]), indexed("gtq", i));
  save_labels(scene.labels, run.path_for("labels.txt"));
  std::ostringstream times;
  times << std::setprecision(17);
  for (double t : scene.spec.times) times << t << '\n';
  run.write_text("times.txt", times.str());
}

struct SelectArgs {
  std::vector<std::string> poses;
  std::size_t frames = 4;
  std::size_t between = 0;
  std::size_t interval = 0;
  std::size_t stride = 1;
  std::size_t top_k = 0;
  double yaw = 5.0;
  double translation = 2.5;
  std::string metric = "rms";
};

void cmd_select(Run& run, const SelectArgs& a) {
  if (a.poses.empty()) throw UsageError("select needs --poses");
  const WindowSpec spec{a.frames, a.between, a.interval, a.stride};
  std::vector<SampleCandidate> candidates;
  for (const auto& p : a.poses) {
    run.inputs.push_back(p);
    auto c = candidates_from_poses(fs::path(p).stem().string(), load_poses(p), spec);
    candidates.insert(candidates.end(), c.begin(), c.end());
  }
  SelectionConfig cfg;
  cfg.yaw_threshold_degrees = a.yaw;
  cfg.translation_threshold = a.translation;
  cfg.top_k = a.top_k;
  cfg.metric = a.metric == "norm" ? TranslationMetric::norm : TranslationMetric::rms;
  const auto chosen = select_hard_samples(candidates, cfg);
  std::vector<bool> picked(candidates.size(), false);
  for (auto i : chosen) picked[i] = true;

  std::ostringstream all, sel;
  all << "scene,window,first_frame,max_yaw_deg,max_translation,selected\n";
  sel << "scene,window,first_frame,max_yaw_deg,max_translation\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto s = score_candidate(c, cfg.metric);
    const auto first = c.window * spec.stride;
    all << c.scene << ',' << c.window << ',' << first << ',' << num(s.max_yaw) << ',' << num(s.max_translation) << ','
        << (picked[i] ? 1 : 0) << '\n';
    if (picked[i])
      sel << c.scene << ',' << c.window << ',' << first << ',' << num(s.max_yaw) << ',' << num(s.max_translation)
          << '\n';
  }
  run.write_text("candidates.csv", all.str());
  run.write_text("selection.csv", sel.str());
  std::cerr << "[select] " << chosen.size() << " of " << candidates.size() << " windows selected\n";
}

// --------------------------------------------------------------- plumbing

/// Every option given on the command line or through --config, as argv.
std::vector<std::string> resolved_args(const CLI::App& sub) {
  std::vector<std::string> args{sub.get_name()};
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->count() == 0) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      if (opt->as<bool>()) args.push_back("--" + name);
      continue;
    }
    args.push_back("--" + name);
    for (const auto& r : opt->results()) args.push_back(r);
  }
  return args;
}

void write_manifest(const Run& run, const CLI::App& sub, double wall_ms) {
  json m;
  m["command"] = run.command;
  m["args"] = resolved_args(sub);
  m["resolved_config"] = sub.config_to_str(true, false);
  m["seed"] = run.common.seed;
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["extra"] = run.extra;
  m["tool_version"] = kVersion;
  m["wall_clock_ms"] = wall_ms;
  std::ofstream os(run.dir / "manifest.json", std::ios::binary);
  os << m.dump(2) << '\n';
}

int run_cli(std::vector<std::string> argv) {
  CLI::App app{"Neural point cloud interpolation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  FitOptions fo;
  InterpArgs ia;
  ExtrapArgs ea;
  BaselineArgs ba;
  EvalArgs va;
  AutolabelArgs la;
  MorphArgs ma;
  GenArgs ga;
  SelectArgs sa;
  std::string manifest_path, replay_out;

  auto* interp = app.add_subcommand("interp", "Fit a window and interpolate n frames between its middle inputs");
  interp->add_option("--inputs", ia.inputs, "Input cloud files in time order")->required();
  interp->add_option("--times", ia.times, "Input timestamps (default 0, 1, ...)");
  interp->add_option("--n", ia.n, "Frames to interpolate")->check(CLI::PositiveNumber)->capture_default_str();
  interp->add_flag("--checkpoint", ia.checkpoint, "Also save the fitted field");

  auto* extrap = app.add_subcommand("extrap", "Fit a window and predict frames after its last input");
  extrap->add_option("--inputs", ea.inputs, "Input cloud files in time order")->required();
  extrap->add_option("--times", ea.times, "Input timestamps (default 0, 1, ...)");
  extrap->add_option("--horizon", ea.horizon, "Future frames to predict")->capture_default_str();

  auto* baseline = app.add_subcommand("baseline", "Explicit motion, scene-flow warp and fusion baselines");
  baseline->add_option("--mode", ba.mode, "linear, quadratic, cubic, flow, fuse-random or fuse-nn")
      ->check(CLI::IsMember({"linear", "quadratic", "cubic", "flow", "fuse-random", "fuse-nn"}))
      ->capture_default_str();
  baseline->add_option("--inputs", ba.inputs, "Input cloud files")->required();
  baseline->add_option("--flows", ba.flows, "Forward and backward flow files (flow mode)");
  baseline->add_option("--t", ba.t, "Relative times in (0, 1)");
  baseline->add_option("--n", ba.n, "Equally spaced times when --t is absent")->capture_default_str();
  baseline->add_option("--corr", ba.corr, "Correspondences for explicit orders: index or field")
      ->check(CLI::IsMember({"index", "field"}))
      ->capture_default_str();
  baseline->add_option("--n-out", ba.n_out, "Output points for fuse-random (0: first input's count)")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Score predictions, or sweep input intervals over a sequence");
  eval->add_option("--pred", va.pred, "Predicted cloud files");
  eval->add_option("--gt", va.gt, "Ground-truth cloud files");
  eval->add_option("--sequence", va.sequence, "Dense sequence for the interval sweep");
  eval->add_option("--intervals", va.intervals, "Interval multipliers to sweep")->delimiter(',');
  eval->add_option("--between", va.between, "Held-out frames between the middle inputs")->capture_default_str();
  eval->add_option("--stride", va.stride, "Frames between window starts")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--max-windows", va.max_windows, "Windows per interval (0: all)")->capture_default_str();
  eval->add_option("--methods", va.methods, "neuralpci, linear, quadratic, cubic")->delimiter(',');
  eval->add_option("--metric-emd", va.metric_emd, "EMD for scoring: auto, exact, approx or off")
      ->check(CLI::IsMember({"auto", "exact", "approx", "off"}))
      ->capture_default_str();

  auto* autolab = app.add_subcommand("autolabel", "Propagate keyframe labels to unlabeled frames");
  autolab->add_option("--keyframes", la.keyframes, "Labeled keyframe clouds")->required();
  autolab->add_option("--labels", la.labels, "Label file per keyframe");
  autolab->add_option("--targets", la.targets, "Unlabeled clouds")->required();
  autolab->add_option("--target-times", la.target_times, "Target times on the keyframe axis (keyframe i at i)");
  autolab->add_option("--truth-labels", la.truth_labels, "Optional reference labels for accuracy");
  autolab->add_option("--k", la.k, "Neighbors in the label vote")->check(CLI::PositiveNumber)->capture_default_str();

  auto* morph = app.add_subcommand("morph", "Morph a source shape into a target shape");
  morph->add_option("--source", ma.source, "Source cloud")->required();
  morph->add_option("--target", ma.target, "Target cloud")->required();
  morph->add_option("--n", ma.n, "Intermediate shapes")->capture_default_str();
  morph->add_flag("--endpoints", ma.endpoints, "Also emit the field's predictions at times 0 and 1");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene from a JSON spec");
  gen->add_option("--spec", ga.spec, "Scene spec (JSON)")->required();
  gen->add_option("--gt-times", ga.gt_times, "Extra times for noiseless ground truth");

  auto* select = app.add_subcommand("select", "Pick large-motion windows from pose files");
  select->add_option("--poses", sa.poses, "Pose files, one scene each")->required();
  select->add_option("--frames", sa.frames, "Frames per window")->capture_default_str();
  select->add_option("--between", sa.between, "Held-out frames between the middle inputs")->capture_default_str();
  select->add_option("--interval", sa.interval, "Frames between inputs (0: between + 1)")->capture_default_str();
  select->add_option("--stride", sa.stride, "Frames between window starts")->capture_default_str();
  select->add_option("--top-k", sa.top_k, "Windows kept per scene and ranking (0: all)")->capture_default_str();
  select->add_option("--yaw", sa.yaw, "Yaw threshold in degrees")->capture_default_str();
  select->add_option("--translation", sa.translation, "Translation threshold in meters")->capture_default_str();
  select->add_option("--metric", sa.metric, "Translation size: rms or norm")
      ->check(CLI::IsMember({"rms", "norm"}))
      ->capture_default_str();

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required();
  replay->add_option("--out-dir", replay_out, "Output directory (default: the recorded one)");

  for (auto* sub : {interp, extrap, baseline, eval, autolab, morph, gen, select}) common.add(*sub);
  for (auto* sub : {interp, extrap, baseline, eval, autolab, morph}) fo.add(*sub);

  try {
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (replay->parsed()) {
    std::ifstream is(manifest_path);
    if (!is) {
      std::cerr << "npci: cannot open manifest " << manifest_path << "\n";
      return 2;
    }
    const auto m = json::parse(is);
    auto args = m.at("args").get<std::vector<std::string>>();
    if (!replay_out.empty()) {
      auto it = std::find(args.begin(), args.end(), "--out-dir");
      if (it != args.end() && it + 1 != args.end()) *(it + 1) = replay_out;
      else {
        args.push_back("--out-dir");
        args.push_back(replay_out);
      }
    }
    std::cerr << "[replay] " << m.at("command").get<std::string>() << "\n";
    return run_cli(args);
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.command = sub->get_name();
  run.common = common;
  run.dir = common.out_dir;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::create_directories(run.dir);
    if (sub == interp) cmd_interp(run, ia, fo);
    else if (sub == extrap) cmd_extrap(run, ea, fo);
    else if (sub == baseline) cmd_baseline(run, ba, fo);
    else if (sub == eval) cmd_eval(run, va, fo);
    else if (sub == autolab) cmd_autolabel(run, la, fo);
    else if (sub == morph) cmd_morph(run, ma, fo);
    else if (sub == gen) cmd_gen(run, ga);
    else if (sub == select) cmd_select(run, sa);
  } catch (const UsageError& e) {
    std::cerr << "npci " << run.command << ": usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "npci " << run.command << ": " << e.what() << "\n";
    return 1;
  }
  const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(run, *sub, wall);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large activation buffers on the heap instead of fresh mmaps per call.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args));
}
