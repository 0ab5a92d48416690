#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace neuralpci;
using namespace testing_support;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("npci_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  std::filesystem::path dir_;
};

Eigen::Matrix3Xf as_float(const Points& p) { return p.cast<float>(); }

}  // namespace

TEST_F(IoTest, EveryFormatRoundTripsAtFloatPrecision) {
  const Points p = random_points(200, 1, -50.0, 50.0);
  for (const char* ext : {"a.xyz", "a.bin", "a.ply"}) {
    save_cloud(PointCloud(p), path(ext));
    const auto back = load_cloud(path(ext));
    EXPECT_TRUE(as_float(back.points) == as_float(p)) << ext;
  }
}

TEST_F(IoTest, FormatFromExtension) {
  EXPECT_EQ(format_from_path("x/y.bin"), CloudFormat::binary);
  EXPECT_EQ(format_from_path("y.ply"), CloudFormat::ply);
  EXPECT_EQ(format_from_path("y.xyz"), CloudFormat::xyz);
  EXPECT_EQ(parse_format("bin"), CloudFormat::binary);
  EXPECT_THROW(parse_format("obj"), std::invalid_argument);
}

TEST_F(IoTest, AsciiAcceptsCommentsAndBlankLines) {
  write("c.xyz", "# header\n\n1 2 3\n  4.5 -6 7e-1\n");
  const auto c = load_cloud(path("c.xyz"));
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.point(1), Vec3(4.5, -6, 0.7));
}

TEST_F(IoTest, AsciiRejectsWrongColumnCount) {
  write("bad.xyz", "1 2 3\n1 2\n");
  try {
    load_cloud(path("bad.xyz"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  write("nan.xyz", "1 2 x\n");
  EXPECT_THROW(load_cloud(path("nan.xyz")), ParseError);
}

TEST_F(IoTest, PlyVertexCountMismatch) {
  write("short.ply", "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
                     "end_header\n0 0 0\n1 1 1\n");
  EXPECT_THROW(load_cloud(path("short.ply")), ParseError);
  write("long.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
                    "end_header\n0 0 0\n1 1 1\n");
  EXPECT_THROW(load_cloud(path("long.ply")), ParseError);
  write("bin.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n");
  EXPECT_THROW(load_cloud(path("bin.ply")), ParseError);
}

TEST_F(IoTest, PlyWithExtraProperties) {
  write("extra.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float z\nproperty uchar red\n"
                     "property float x\nproperty float y\nend_header\n3 255 1 2\n6 0 4 5\n");
  const auto c = load_cloud(path("extra.ply"));
  EXPECT_EQ(c.point(0), Vec3(1, 2, 3));
  EXPECT_EQ(c.point(1), Vec3(4, 5, 6));
}

TEST_F(IoTest, TruncatedBinaryIsRejected) {
  save_cloud(PointCloud(random_points(10, 2)), path("t.bin"));
  std::filesystem::resize_file(path("t.bin"), 8 + 4 + 12 * 5 + 2);
  EXPECT_THROW(load_cloud(path("t.bin")), ParseError);
  write("m.bin", "NOTMAGIC");
  EXPECT_THROW(load_cloud(path("m.bin")), ParseError);
}

TEST_F(IoTest, MissingFileThrows) { EXPECT_THROW(load_cloud(path("none.xyz")), std::runtime_error); }

TEST_F(IoTest, LabelsRoundTrip) {
  const std::vector<int> labels{0, 3, -1, 7};
  save_labels(labels, path("l.txt"));
  EXPECT_EQ(load_labels(path("l.txt")), labels);
  write("bad.txt", "1 2\n");
  EXPECT_THROW(load_labels(path("bad.txt")), ParseError);
}

TEST_F(IoTest, PosesRoundTripAndCompose) {
  RigidPose a;
  a.rotation = Eigen::AngleAxisd(0.3, Vec3(0, 0, 1)).toRotationMatrix();
  a.translation = Vec3(1, 2, 3);
  RigidPose b;
  b.rotation = Eigen::AngleAxisd(-0.7, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  b.translation = Vec3(-4, 0.5, 2);
  save_poses({a, b}, path("p.txt"));
  const auto back = load_poses(path("p.txt"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[1].rotation.isApprox(b.rotation, 1e-15));
  EXPECT_TRUE(back[1].is_valid());
  const auto rel = relative_pose(a, b);
  const auto recon = a * rel;
  EXPECT_TRUE(recon.rotation.isApprox(b.rotation, 1e-14));
  EXPECT_TRUE(recon.translation.isApprox(b.translation, 1e-14));
  write("short.txt", "1 0 0 0 0 1 0 0\n");
  EXPECT_THROW(load_poses(path("short.txt")), ParseError);
}
