#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace neuralpci;
using namespace testing_support;

namespace {

FitConfig quick_config(int iters) {
  FitConfig c;
  c.max_iters = iters;
  c.lr = 3e-3;
  c.loss = {1.0, 0.0, 0.0};
  c.field.depth = 3;
  c.field.width = 32;
  return c;
}

InputWindow static_window(Eigen::Index n) {
  const Points p = box_surface(n, 1);
  return window_from({p, p, p, p});
}

}  // namespace

TEST(Fit, StaticWindowConverges) {
  const auto w = static_window(128);
  const auto r = fit(w, quick_config(150));
  ASSERT_EQ(r.report.history.size(), 150u);
  EXPECT_LT(r.report.final_loss.total, r.report.history.front().loss.total);
  const auto preds = interpolate(r, w, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(chamfer(preds[i].points, w.frames[i].points).value, 1e-3);
}

TEST(Fit, BitIdenticalAcrossRuns) {
  const auto w = window_from({random_points(48, 1), random_points(48, 2), random_points(48, 3)});
  auto cfg = quick_config(20);
  cfg.loss = {1.0, 1.0, 1.0};
  const auto a = fit(w, cfg), b = fit(w, cfg);
  EXPECT_EQ(a.report.final_loss.total, b.report.final_loss.total);
  for (std::size_t l = 0; l < a.field.layers.size(); ++l) EXPECT_EQ(a.field.layers[l].weights, b.field.layers[l].weights);
  cfg.seed = 1;
  EXPECT_NE(fit(w, cfg).report.final_loss.total, a.report.final_loss.total);
}

TEST(Fit, LogEveryThinsTheHistory) {
  auto cfg = quick_config(10);
  cfg.log_every = 4;
  const auto r = fit(static_window(32), cfg);
  ASSERT_EQ(r.report.history.size(), 3u);
  EXPECT_EQ(r.report.history[2].iteration, 8);
}

TEST(Fit, ConfigValidation) {
  auto cfg = quick_config(0);
  EXPECT_THROW(fit(static_window(32), cfg), std::invalid_argument);
  cfg = quick_config(1);
  cfg.lr = -1.0;
  EXPECT_THROW(fit(static_window(32), cfg), std::invalid_argument);
}

TEST(Fit, RejectsMismatchedWindow) {
  InputWindow w = window_from({random_points(30, 1), random_points(30, 2)});
  w.frames[1].points = random_points(29, 3);
  EXPECT_THROW(fit(w, quick_config(1)), ShapeError);
  w.frames[1].points = random_points(30, 3);
  w.frames[1].time = 0.0;
  EXPECT_THROW(fit(w, quick_config(1)), std::invalid_argument);
}

TEST(Queries, IntermediateTimes) {
  EXPECT_EQ(intermediate_times(1), (std::vector<double>{1.5}));
  EXPECT_EQ(intermediate_times(3), (std::vector<double>{1.25, 1.5, 1.75}));
  EXPECT_EQ(intermediate_times(1, 2), (std::vector<double>{0.5}));
  EXPECT_THROW(intermediate_times(0), std::invalid_argument);
}

TEST(Queries, ExtrapolationTimesFollowTheLastFrame) {
  const auto w = static_window(32);
  const auto field = make_field(quick_config(1).field, 0);
  const auto out = extrapolate(field, w, 4);
  ASSERT_EQ(out.size(), 4u);
  for (int h = 0; h < 4; ++h) EXPECT_EQ(out[static_cast<std::size_t>(h)].time, 4.0 + h);
  EXPECT_THROW(extrapolate(field, w, 0), std::invalid_argument);
}

TEST(Queries, InterpolationRejectsNonFiniteTimes) {
  const auto w = static_window(32);
  const auto field = make_field(quick_config(1).field, 0);
  EXPECT_THROW(interpolate(field, w, std::vector<double>{std::nan("")}), std::invalid_argument);
}

TEST(FitMany, ThreadedMatchesSerial) {
  std::vector<InputWindow> windows;
  for (int i = 0; i < 3; ++i)
    windows.push_back(window_from({random_points(24, 10 + i), random_points(24, 20 + i)}));
  const auto cfg = quick_config(5);
  const auto serial = fit_many(windows, cfg, 1);
  const auto threaded = fit_many(windows, cfg, 3);
  for (std::size_t i = 0; i < windows.size(); ++i)
    EXPECT_EQ(serial[i].report.final_loss.total, threaded[i].report.final_loss.total);
}

TEST(FitLog, OneLinePerRecord) {
  auto r = fit(static_window(32), quick_config(3));
  std::ostringstream os;
  write_fit_log(os, r.report);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# iteration cd emd smooth total ms");
  int rows = 0;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    int it;
    double v[5];
    row >> it >> v[0] >> v[1] >> v[2] >> v[3] >> v[4];
    EXPECT_FALSE(row.fail());
    EXPECT_EQ(it, rows++);
  }
  EXPECT_EQ(rows, 3);
  const auto j = fit_summary(r.report);
  EXPECT_EQ(j["final"]["pairs"].size(), 16u);
  EXPECT_EQ(j["iterations_logged"], 3);
}
