#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmrk/error.hpp"
#include "hmrk/random.hpp"
#include "hmrk/rasterizer.hpp"
#include "hmrk/synth_template.hpp"

namespace hmrk {
namespace {

LabelImage one_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c, int size) {
  Matrix2X pts(2, 3);
  pts << a.x(), b.x(), c.x(), a.y(), b.y(), c.y();
  FaceList f(3, 1);
  f << 0, 1, 2;
  return rasterize(pts, Eigen::VectorXd::Zero(3), f, {1}, size);
}

int covered(const LabelImage& img) {
  int n = 0;
  for (auto l : img.labels) n += l != 0;
  return n;
}

TEST(Rasterizer, FullScreenQuad) {
  Matrix2X pts(2, 4);
  pts << -1, 1, 1, -1, -1, -1, 1, 1;
  FaceList f(3, 2);
  f << 0, 0, 1, 2, 2, 3;
  const LabelImage img = rasterize(pts, Eigen::VectorXd::Zero(4), f, {1, 1}, 64);
  EXPECT_EQ(covered(img), 64 * 64);
}

TEST(Rasterizer, DegenerateTriangleCoversNothing) {
  EXPECT_EQ(covered(one_triangle({-1, -1}, {0, 0}, {1, 1}, 64)), 0);
}

TEST(Rasterizer, PixelCenterConvention) {
  const Eigen::Vector2d p = pixel_center(0, 0, 64);
  EXPECT_DOUBLE_EQ(p.x(), 0.5 / 32.0 - 1.0);
  EXPECT_DOUBLE_EQ(p.y(), 0.5 / 32.0 - 1.0);
}

TEST(Rasterizer, WindingDoesNotMatter) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d a(rng.uniform(-1, 1), rng.uniform(-1, 1)), b(rng.uniform(-1, 1), rng.uniform(-1, 1)),
        c(rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_EQ(one_triangle(a, b, c, 32).labels, one_triangle(a, c, b, 32).labels);
  }
}

TEST(Rasterizer, SharedEdgeThroughCentersCoveredOnce) {
  // Square split along a diagonal that passes exactly through pixel centres.
  const int size = 8;
  const Eigen::Vector2d p0 = pixel_center(1, 1, size), p1 = pixel_center(6, 1, size), p2 = pixel_center(6, 6, size),
                        p3 = pixel_center(1, 6, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Eigen::Vector2d p = pixel_center(x, y, size);
      const int n = triangle_covers(p0, p1, p2, p) + triangle_covers(p0, p2, p3, p);
      const bool interior = x > 1 && x < 6 && y > 1 && y < 6;
      if (interior) EXPECT_EQ(n, 1) << x << "," << y;
      EXPECT_LE(n, 1);
    }
  }
}

TEST(Rasterizer, NearerFaceWins) {
  Matrix2X pts(2, 6);
  pts << -1, 1, 0, -1, 1, 0, -1, -1, 1, -1, -1, 1;
  Eigen::VectorXd z(6);
  z << 2, 2, 2, 1, 1, 1;
  FaceList f(3, 2);
  f << 0, 3, 1, 4, 2, 5;
  const LabelImage img = rasterize(pts, z, f, {1, 2}, 16);
  EXPECT_EQ(img.at(8, 8), 2);
  z << 1, 1, 1, 1, 1, 1;
  EXPECT_EQ(rasterize(pts, z, f, {1, 2}, 16).at(8, 8), 1);  // tie -> lower face id
  FaceList swapped(3, 2);
  swapped << 3, 0, 4, 1, 5, 2;
  EXPECT_EQ(rasterize(pts, z, swapped, {2, 1}, 16).at(8, 8), 2);
}

TEST(Rasterizer, FaceLabelMajority) {
  EXPECT_EQ(face_label(3, 3, 1), 3);
  EXPECT_EQ(face_label(1, 4, 4), 4);
  EXPECT_EQ(face_label(5, 2, 7), 2);
}

TEST(Rasterizer, BodyRenderIsCentredAndLabelled) {
  const BodyTemplate body = synth_template();
  const CameraParams cam{0.9, Eigen::Vector3d(std::numbers::pi, 0, 0), Eigen::Vector2d::Zero()};
  const LabelImage img = render_parts(body.rest_vertices, body.faces, vertex_part_labels(body), cam, 64);
  EXPECT_GT(covered(img), 200);
  EXPECT_NE(img.at(32, 32), 0);
  EXPECT_EQ(img.at(0, 0), 0);
}

TEST(ObjExport, RoundTripsExactly) {
  const BodyTemplate body = synth_template();
  const auto path = std::filesystem::temp_directory_path() / "hmrk_test_mesh.obj";
  export_obj(body.rest_vertices, body.faces, path);
  std::ifstream in(path);
  std::string line;
  Eigen::Index v = 0, f = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      ss >> x >> y >> z;
      EXPECT_EQ(x, body.rest_vertices(0, v));
      EXPECT_EQ(y, body.rest_vertices(1, v));
      EXPECT_EQ(z, body.rest_vertices(2, v));
      ++v;
    } else if (tag == "f") {
      int a, b, c;
      ss >> a >> b >> c;
      EXPECT_EQ(a - 1, body.faces(0, f));
      EXPECT_EQ(c - 1, body.faces(2, f));
      ++f;
    }
  }
  EXPECT_EQ(v, body.rest_vertices.cols());
  EXPECT_EQ(f, body.faces.cols());
  std::filesystem::remove(path);
}

TEST(ObjExport, UnwritablePathThrows) {
  EXPECT_THROW(export_obj(Matrix3X(3, 0), FaceList(3, 0), "/nonexistent_dir/x.obj"), Error);
}

}  // namespace
}  // namespace hmrk
