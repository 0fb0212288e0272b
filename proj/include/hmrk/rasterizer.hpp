#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hmrk/body_model.hpp"
#include "hmrk/camera.hpp"

namespace hmrk {

using FaceList = Eigen::Matrix<int, 3, Eigen::Dynamic>;

// Square label image; label 0 is background and its depth is +inf.
struct LabelImage {
  int size = 0;
  std::vector<std::uint8_t> labels;  // row-major, row = y (down)
  std::vector<double> depth;
  std::vector<int> face;             // covering face id, -1 for background

  LabelImage() = default;
  explicit LabelImage(int s);
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y * size + x)]; }
};

// Pixel (x, y) has its centre at ((x + 0.5) / size * 2 - 1, (y + 0.5) / size * 2 - 1)
// in the normalized crop frame.
Eigen::Vector2d pixel_center(int x, int y, int size);

// Edge-function coverage test with a top-left fill rule. Triangles of either
// winding are accepted; zero-area triangles cover nothing.
bool triangle_covers(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& p);

// Z-buffered rasterization of triangles already in the crop frame; smaller
// depth is nearer and exact depth ties go to the lower face index.
LabelImage rasterize(const Matrix2X& points, const Eigen::VectorXd& depth, const FaceList& faces,
                     const std::vector<int>& face_labels, int size);

// Label held by at least two of a face's vertices, else the smallest of the three.
int face_label(int a, int b, int c);

// Projects the mesh with the weak-perspective camera (depth = rotated z) and
// rasterizes part labels.
LabelImage render_parts(const Matrix3X& mesh, const FaceList& faces, const std::vector<int>& vertex_labels,
                        const CameraParams& cam, int size);

// Wavefront OBJ with "v x y z" lines at full double precision and 1-indexed
// "f a b c" lines.
void export_obj(const Matrix3X& mesh, const FaceList& faces, const std::filesystem::path& path);

}  // namespace hmrk
