#include "hmrk/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hmrk/error.hpp"
#include "hmrk/rotation.hpp"

namespace hmrk {

namespace {

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// For a positively oriented triangle, an edge lying exactly on a pixel centre
// belongs to the triangle when it is a "top" or "left" edge.
bool owns_edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

bool inside(double e, const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return e > 0.0 || (e == 0.0 && owns_edge(a, b)); }

}  // namespace

LabelImage::LabelImage(int s)
    : size(s),
      labels(static_cast<std::size_t>(s * s), 0),
      depth(static_cast<std::size_t>(s * s), std::numeric_limits<double>::infinity()),
      face(static_cast<std::size_t>(s * s), -1) {}

Eigen::Vector2d pixel_center(int x, int y, int size) {
  return {(x + 0.5) / size * 2.0 - 1.0, (y + 0.5) / size * 2.0 - 1.0};
}

bool triangle_covers(const Eigen::Vector2d& a, const Eigen::Vector2d& b0, const Eigen::Vector2d& c0,
                     const Eigen::Vector2d& p) {
  const double area = edge(a, b0, c0);
  if (area == 0.0) return false;
  const Eigen::Vector2d& b = area > 0 ? b0 : c0;
  const Eigen::Vector2d& c = area > 0 ? c0 : b0;
  return inside(edge(a, b, p), a, b) && inside(edge(b, c, p), b, c) && inside(edge(c, a, p), c, a);
}

LabelImage rasterize(const Matrix2X& points, const Eigen::VectorXd& depth, const FaceList& faces,
                     const std::vector<int>& face_labels, int size) {
  if (size <= 0) fail(ErrorKind::kInvalidArgument, "image size must be positive");
  if (face_labels.size() != static_cast<std::size_t>(faces.cols())) {
    fail(ErrorKind::kShapeMismatch, "one label per face required");
  }
  LabelImage img(size);
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    const Eigen::Vector2d a = points.col(faces(0, f)), b0 = points.col(faces(1, f)), c0 = points.col(faces(2, f));
    double za = depth[faces(0, f)], zb = depth[faces(1, f)], zc = depth[faces(2, f)];
    const double area = edge(a, b0, c0);
    if (area == 0.0 || !std::isfinite(area)) continue;
    const bool flip = area < 0.0;
    const Eigen::Vector2d& b = flip ? c0 : b0;
    const Eigen::Vector2d& c = flip ? b0 : c0;
    if (flip) std::swap(zb, zc);
    const double signed_area = std::fabs(area);

    // Pixel bounding box.
    auto to_px = [size](double v) { return (v + 1.0) * 0.5 * size - 0.5; };
    const int x0 = std::max(0, static_cast<int>(std::floor(to_px(std::min({a.x(), b.x(), c.x()})))));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(to_px(std::max({a.x(), b.x(), c.x()})))));
    const int y0 = std::max(0, static_cast<int>(std::floor(to_px(std::min({a.y(), b.y(), c.y()})))));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(to_px(std::max({a.y(), b.y(), c.y()})))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d p = pixel_center(x, y, size);
        const double ea = edge(b, c, p), eb = edge(c, a, p), ec = edge(a, b, p);
        if (!inside(ea, b, c) || !inside(eb, c, a) || !inside(ec, a, b)) continue;
        const double z = (ea * za + eb * zb + ec * zc) / signed_area;
        const std::size_t i = static_cast<std::size_t>(y * size + x);
        if (z < img.depth[i] || (z == img.depth[i] && f < img.face[i])) {
          img.depth[i] = z;
          img.face[i] = static_cast<int>(f);
          img.labels[i] = static_cast<std::uint8_t>(face_labels[static_cast<std::size_t>(f)]);
        }
      }
    }
  }
  return img;
}

int face_label(int a, int b, int c) {
  if (a == b || a == c) return a;
  if (b == c) return b;
  return std::min({a, b, c});
}

LabelImage render_parts(const Matrix3X& mesh, const FaceList& faces, const std::vector<int>& vertex_labels,
                        const CameraParams& cam, int size) {
  if (vertex_labels.size() != static_cast<std::size_t>(mesh.cols())) {
    fail(ErrorKind::kShapeMismatch, "one part label per vertex required");
  }
  const Eigen::Matrix3d r = rodrigues(cam.global_rot);
  Matrix2X pts(2, mesh.cols());
  Eigen::VectorXd depth(mesh.cols());
  for (Eigen::Index v = 0; v < mesh.cols(); ++v) {
    const Eigen::Vector3d q = r * mesh.col(v);
    pts.col(v) = cam.scale * q.head<2>() + cam.translation;
    depth[v] = q.z();
  }
  std::vector<int> labels(static_cast<std::size_t>(faces.cols()));
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    labels[static_cast<std::size_t>(f)] =
        face_label(vertex_labels[static_cast<std::size_t>(faces(0, f))], vertex_labels[static_cast<std::size_t>(faces(1, f))],
                   vertex_labels[static_cast<std::size_t>(faces(2, f))]);
  }
  return rasterize(pts, depth, faces, labels, size);
}

void export_obj(const Matrix3X& mesh, const FaceList& faces, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  std::fprintf(fp, "# %ld vertices, %ld faces\n", static_cast<long>(mesh.cols()), static_cast<long>(faces.cols()));
  for (Eigen::Index v = 0; v < mesh.cols(); ++v) {
    std::fprintf(fp, "v %.17g %.17g %.17g\n", mesh(0, v), mesh(1, v), mesh(2, v));
  }
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    std::fprintf(fp, "f %d %d %d\n", faces(0, f) + 1, faces(1, f) + 1, faces(2, f) + 1);
  }
  const bool ok = std::ferror(fp) == 0;
  if (std::fclose(fp) != 0 || !ok) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace hmrk
