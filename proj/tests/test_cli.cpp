#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace neuralpci;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const char* tool = std::getenv("NPCI_TOOL");
    if (!tool) GTEST_SKIP() << "NPCI_TOOL is not set";
    tool_ = tool;
    dir_ = fs::temp_directory_path() /
           ("npci_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!dir_.empty()) fs::remove_all(dir_);
  }

  int run(const std::string& args) const {
    const std::string cmd = tool_ + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }
  std::string read(const std::string& name) const {
    std::ifstream is(p(name), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  std::string tool_;
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, RejectsZeroIterations) {
  save_cloud(PointCloud(random_points(20, 1)), p("a.xyz"));
  save_cloud(PointCloud(random_points(20, 2)), p("b.xyz"));
  EXPECT_NE(run("interp --inputs " + p("a.xyz") + " " + p("b.xyz") + " --iters 0 --out-dir " + p("o")), 0);
  EXPECT_FALSE(fs::exists(p("o/manifest.json")));
}

TEST_F(CliTest, LinearBaselineIsExactOnLinearMotion) {
  const Points base = random_points(30, 3);
  const Vec3 v(0.5, -0.25, 1.0);
  for (int i = 0; i < 4; ++i) save_cloud(PointCloud(Points(base.colwise() + v * (i - 1.0))), p("f" + std::to_string(i) + ".bin"));
  ASSERT_EQ(run("baseline --mode linear --format bin --t 0.5 --inputs " + p("f0.bin") + " " + p("f1.bin") + " " +
                p("f2.bin") + " " + p("f3.bin") + " --out-dir " + p("o")),
            0);
  const auto out = load_cloud(p("o/linear_00.bin"));
  const Points truth = base.colwise() + 0.5 * v;
  EXPECT_LE((out.points - truth).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(fs::exists(p("o/manifest.json")));
}

TEST_F(CliTest, EvalPairs) {
  Points a = Points::Zero(3, 1), b = Points::Zero(3, 1);
  b(0, 0) = 1.0;
  save_cloud(PointCloud(a), p("a.xyz"));
  save_cloud(PointCloud(b), p("b.xyz"));
  ASSERT_EQ(run("eval --pred " + p("a.xyz") + " " + p("a.xyz") + " --gt " + p("a.xyz") + " " + p("b.xyz") +
                " --out-dir " + p("o")),
            0);
  const auto csv = read("o/metrics.csv");
  EXPECT_NE(csv.find("\n0,0,0,0,1,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\n0,1,2,1,1,"), std::string::npos) << csv;
}

TEST_F(CliTest, AutolabelWithoutLabelsIsAUsageError) {
  save_cloud(PointCloud(random_points(20, 1)), p("a.xyz"));
  EXPECT_EQ(run("autolabel --keyframes " + p("a.xyz") + " " + p("a.xyz") + " --targets " + p("a.xyz") +
                " --target-times 0.5 --out-dir " + p("o")),
            2);
}

TEST_F(CliTest, GenIsReproducible) {
  std::ofstream(p("spec.json")) << R"({"noise": 0.01, "bodies": [{"shape": "sphere", "size": [0.5], "points": 50}]})";
  ASSERT_EQ(run("gen --spec " + p("spec.json") + " --seed 4 --out-dir " + p("g1")), 0);
  ASSERT_EQ(run("gen --spec " + p("spec.json") + " --seed 4 --out-dir " + p("g2")), 0);
  EXPECT_EQ(read("g1/frame_03.xyz"), read("g2/frame_03.xyz"));
  EXPECT_FALSE(read("g1/frame_03.xyz").empty());
  EXPECT_EQ(load_labels(p("g1/labels.txt")).size(), 50u);
}

TEST_F(CliTest, ReplayReproducesOutputs) {
  std::ofstream(p("spec.json")) << R"({"bodies": [{"shape": "box", "points": 40}]})";
  ASSERT_EQ(run("gen --spec " + p("spec.json") + " --out-dir " + p("g1")), 0);
  ASSERT_EQ(run("replay --manifest " + p("g1/manifest.json") + " --out-dir " + p("g2")), 0);
  for (const char* f : {"frame_00.xyz", "gt_02.xyz", "labels.txt", "times.txt"}) EXPECT_EQ(read(std::string("g1/") + f), read(std::string("g2/") + f));
}

TEST_F(CliTest, StaticPosesSelectNothing) {
  std::vector<RigidPose> poses(12);
  save_poses(poses, p("poses.txt"));
  ASSERT_EQ(run("select --poses " + p("poses.txt") + " --out-dir " + p("o")), 0);
  const auto sel = read("o/selection.csv");
  EXPECT_EQ(std::count(sel.begin(), sel.end(), '\n'), 1) << sel;
}

TEST_F(CliTest, UnknownBaselineModeFailsToParse) {
  save_cloud(PointCloud(random_points(5, 1)), p("a.xyz"));
  EXPECT_NE(run("baseline --mode spline --inputs " + p("a.xyz") + " --out-dir " + p("o")), 0);
}
