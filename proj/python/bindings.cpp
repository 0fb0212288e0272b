#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

#include "hmrk/body_model.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/error.hpp"
#include "hmrk/grad_suite.hpp"
#include "hmrk/metrics.hpp"
#include "hmrk/rasterizer.hpp"
#include "hmrk/rotation.hpp"
#include "hmrk/synth_template.hpp"
#include "hmrk/synthetic_data.hpp"
#include "hmrk/training.hpp"

namespace py = pybind11;
using namespace hmrk;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Column-major 3xN / 2xN matrices go out as row-per-point (N, 3) arrays.
Array points_out(const Eigen::MatrixXd& m) {
  Array a({m.cols(), m.rows()});
  auto v = a.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < m.cols(); ++i)
    for (Eigen::Index k = 0; k < m.rows(); ++k) v(i, k) = m(k, i);
  return a;
}

Matrix3X points_in(const Array& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw Error(ErrorKind::kShapeMismatch, std::string(what) + " must be (N, 3)");
  auto v = a.unchecked<2>();
  Matrix3X m(3, a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (int k = 0; k < 3; ++k) m(k, i) = v(i, k);
  return m;
}

RowMatrix matrix_in(const Array& a, const char* what) {
  if (a.ndim() != 2) throw Error(ErrorKind::kShapeMismatch, std::string(what) + " must be 2-D");
  return Eigen::Map<const RowMatrix>(a.data(), a.shape(0), a.shape(1));
}

template <class Vec>
Vec vector_in(const Array& a, const char* what) {
  if (a.ndim() != 1 || a.shape(0) != Vec::RowsAtCompileTime) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(what) + " must have " + std::to_string(Vec::RowsAtCompileTime) + " values");
  }
  return Eigen::Map<const Vec>(a.data());
}

ThetaVector theta_in(const Array& a) {
  ThetaVector t;
  t.values = vector_in<Eigen::Matrix<double, kThetaDim, 1>>(a, "theta");
  return t;
}

Array theta_out(const ThetaVector& t) {
  Array a(static_cast<py::ssize_t>(kThetaDim));
  std::copy(t.values.data(), t.values.data() + kThetaDim, a.mutable_data());
  return a;
}

py::dict posed_dict(const PosedBody& p) {
  py::dict d;
  d["mesh"] = points_out(p.mesh);
  d["joints"] = points_out(p.joints);
  d["keypoints"] = points_out(p.keypoints);
  return d;
}

py::array_t<std::uint8_t> labels_out(const std::vector<std::uint8_t>& l, int size) {
  py::array_t<std::uint8_t> a({size, size});
  std::copy(l.begin(), l.end(), a.mutable_data());
  return a;
}

std::vector<std::uint8_t> labels_in(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

std::vector<Matrix3X> clouds_in(const py::list& l) {
  std::vector<Matrix3X> out;
  for (const auto& item : l) out.push_back(points_in(item.cast<Array>(), "skeleton"));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Body model, weak-perspective projection, metrics, rasterizer and trained-model inference";
  m.attr("__version__") = "0.1.0";

  static py::exception<Error> error(m, "HmrkError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (std::string(error_kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.attr("NUM_JOINTS") = kNumJoints;
  m.attr("NUM_SHAPE") = kNumShape;
  m.attr("POSE_DIM") = kPoseDim;
  m.attr("THETA_DIM") = kThetaDim;

  py::class_<BodyTemplate>(m, "BodyTemplate")
      .def_property_readonly("num_vertices", &BodyTemplate::num_vertices)
      .def_property_readonly("num_joints", &BodyTemplate::num_joints)
      .def_property_readonly("num_keypoints", &BodyTemplate::num_keypoints)
      .def_property_readonly("rest_vertices", [](const BodyTemplate& b) { return points_out(b.rest_vertices); })
      .def_property_readonly("faces",
                             [](const BodyTemplate& b) {
                               py::array_t<int> a({b.faces.cols(), Eigen::Index{3}});
                               auto v = a.mutable_unchecked<2>();
                               for (Eigen::Index f = 0; f < b.faces.cols(); ++f)
                                 for (int k = 0; k < 3; ++k) v(f, k) = b.faces(k, f);
                               return a;
                             })
      .def_readonly("parents", &BodyTemplate::parents)
      .def_readonly("shape_blendshapes", &BodyTemplate::shape_blendshapes)
      .def_readonly("joint_regressor", &BodyTemplate::joint_regressor)
      .def_readonly("skin_weights", &BodyTemplate::skin_weights)
      .def_readonly("pose_blendshapes", &BodyTemplate::pose_blendshapes)
      .def_property_readonly("keypoints",
                             [](const BodyTemplate& b) {
                               py::list out;
                               for (const auto& kp : b.keypoints) {
                                 py::dict d;
                                 d["name"] = kp.name;
                                 if (kp.kind == KeypointEntry::Kind::kVertex) {
                                   d["vertex"] = kp.vertex;
                                 } else {
                                   py::dict w;
                                   for (const auto& [v, x] : kp.weights) w[py::int_(v)] = x;
                                   d["weights"] = w;
                                 }
                                 out.append(d);
                               }
                               return out;
                             })
      .def("validate", &BodyTemplate::validate);

  m.def(
      "synth_template",
      [](std::size_t num_vertices, std::uint64_t seed) {
        SynthTemplateConfig c;
        c.num_vertices = num_vertices;
        c.seed = seed;
        return synth_template(c);
      },
      py::arg("num_vertices") = SynthTemplateConfig{}.num_vertices, py::arg("seed") = 0,
      "Procedural 24-joint body model");
  m.def("load_model", [](const std::string& p) { return load_model(p); }, py::arg("path"));
  m.def(
      "make_body",
      [](const Array& verts, const py::array_t<int, py::array::c_style | py::array::forcecast>& faces,
         const Array& shape_blendshapes, const Array& joint_regressor, const std::vector<int>& parents,
         const Array& skin_weights, const py::list& keypoints, const std::optional<Array>& pose_blendshapes) {
        BodyTemplate b;
        b.rest_vertices = points_in(verts, "rest_vertices");
        if (faces.ndim() != 2 || faces.shape(1) != 3) throw Error(ErrorKind::kShapeMismatch, "faces must be (F, 3)");
        b.faces.resize(3, faces.shape(0));
        auto fv = faces.unchecked<2>();
        for (py::ssize_t f = 0; f < faces.shape(0); ++f)
          for (int k = 0; k < 3; ++k) b.faces(k, f) = fv(f, k);
        b.shape_blendshapes = matrix_in(shape_blendshapes, "shape_blendshapes");
        b.joint_regressor = matrix_in(joint_regressor, "joint_regressor");
        b.parents = parents;
        b.skin_weights = matrix_in(skin_weights, "skin_weights");
        for (const auto& item : keypoints) {
          const auto d = item.cast<py::dict>();
          KeypointEntry kp;
          kp.name = d["name"].cast<std::string>();
          if (d.contains("vertex")) {
            kp.kind = KeypointEntry::Kind::kVertex;
            kp.vertex = d["vertex"].cast<int>();
          } else {
            kp.kind = KeypointEntry::Kind::kRegression;
            for (const auto& [v, w] : d["weights"].cast<std::map<int, double>>()) kp.weights.emplace_back(v, w);
          }
          b.keypoints.push_back(std::move(kp));
        }
        if (pose_blendshapes) b.pose_blendshapes = matrix_in(*pose_blendshapes, "pose_blendshapes");
        b.validate();
        return b;
      },
      py::arg("rest_vertices"), py::arg("faces"), py::arg("shape_blendshapes"), py::arg("joint_regressor"),
      py::arg("parents"), py::arg("skin_weights"), py::arg("keypoints"), py::arg("pose_blendshapes") = py::none(),
      "Body model from raw arrays; keypoints are dicts with 'name' and either 'vertex' or 'weights'");

  m.def("save_model", [](const std::string& p, const BodyTemplate& b) { save_model(p, b); }, py::arg("path"),
        py::arg("body"));

  m.def("rodrigues", [](const Eigen::Vector3d& w) { return Eigen::Matrix3d(rodrigues(w)); }, py::arg("axis_angle"));

  m.def(
      "pose_body",
      [](const BodyTemplate& b, const Array& shape, const Array& pose, const std::optional<Eigen::Vector3d>& rot) {
        const Eigen::Matrix3d r = rot ? rodrigues(*rot) : Eigen::Matrix3d::Identity();
        return posed_dict(pose_body(b, vector_in<ShapeCoeffs>(shape, "shape"), vector_in<PoseVector>(pose, "pose"), r));
      },
      py::arg("body"), py::arg("shape"), py::arg("pose"), py::arg("global_rot") = py::none(),
      "Posed mesh, joints and keypoints as (N, 3) arrays");

  m.def(
      "compose_projection",
      [](const Array& theta, const BodyTemplate& b) {
        const Projection p = compose_projection(theta_in(theta), b);
        py::dict d;
        d["mesh"] = points_out(p.mesh);
        d["keypoints3d"] = points_out(p.keypoints3d);
        d["keypoints2d"] = points_out(p.keypoints2d);
        return d;
      },
      py::arg("theta"), py::arg("body"), "Body model plus weak-perspective camera for an 85-vector");

  m.def("default_mean_theta", [] { return theta_out(default_mean_theta({})); });

  // metrics
  m.def("mpjpe", [](const Array& p, const Array& g) { return mpjpe(points_in(p, "pred"), points_in(g, "gt")); },
        py::arg("pred"), py::arg("gt"));
  m.def(
      "reconstruction_error",
      [](const Array& p, const Array& g, bool with_scale) {
        return reconstruction_error(points_in(p, "pred"), points_in(g, "gt"), with_scale);
      },
      py::arg("pred"), py::arg("gt"), py::arg("with_scale") = true);
  m.def(
      "procrustes_align",
      [](const Array& p, const Array& g, bool with_scale) {
        const Alignment a = procrustes_align(points_in(p, "pred"), points_in(g, "gt"), with_scale);
        py::dict d;
        d["aligned"] = points_out(a.aligned);
        d["scale"] = a.transform.scale;
        d["rotation"] = Eigen::Matrix3d(a.transform.rotation);
        d["translation"] = Eigen::Vector3d(a.transform.translation);
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("with_scale") = true);
  m.def(
      "pck", [](const std::vector<double>& e, double t, bool inclusive) { return pck(e, t, inclusive); },
      py::arg("errors"), py::arg("threshold") = 150.0, py::arg("inclusive") = false);
  m.def(
      "auc", [](const std::vector<double>& e, bool inclusive) { return auc(e, inclusive); }, py::arg("errors"),
      py::arg("inclusive") = false);
  m.def(
      "seg_scores",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& p,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& g) {
        const SegScores s = seg_scores(labels_in(p), labels_in(g));
        py::dict d;
        d["accuracy"] = s.accuracy;
        d["mean_f1"] = s.mean_f1;
        d["f1"] = std::vector<double>(s.f1.begin(), s.f1.end());
        d["present"] = std::vector<bool>(s.present.begin(), s.present.end());
        return d;
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "evaluate_joints",
      [](const py::list& pred, const py::list& gt) {
        return py::module_::import("json").attr("loads")(to_json(evaluate_joints(clouds_in(pred), clouds_in(gt))).dump());
      },
      py::arg("pred"), py::arg("gt"), "Report over lists of (P, 3) skeletons in metres");

  // rendering and export
  m.def(
      "render_parts",
      [](const Array& mesh, const BodyTemplate& b, double scale, const Eigen::Vector2d& translation, int size) {
        const CameraParams cam{scale, Eigen::Vector3d::Zero(), translation};
        return labels_out(render_parts(points_in(mesh, "mesh"), b.faces, vertex_part_labels(b), cam, size).labels,
                          size);
      },
      py::arg("mesh"), py::arg("body"), py::arg("scale") = 1.0, py::arg("translation") = Eigen::Vector2d::Zero(),
      py::arg("size") = 64, "Part-label image of a camera-frame mesh");
  m.def(
      "export_obj",
      [](const Array& mesh, const BodyTemplate& b, const std::string& path) {
        export_obj(points_in(mesh, "mesh"), b.faces, path);
      },
      py::arg("mesh"), py::arg("body"), py::arg("path"));

  // data, checks and inference
  m.def(
      "sample_pool",
      [](std::size_t n, std::uint64_t seed) {
        const MocapPool p = sample_pool({}, n, seed);
        Array shapes({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(kNumShape)});
        Array poses({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(kPoseDim)});
        for (std::size_t i = 0; i < n; ++i) {
          std::copy(p.shapes[i].data(), p.shapes[i].data() + kNumShape, shapes.mutable_data() + i * kNumShape);
          std::copy(p.poses[i].data(), p.poses[i].data() + kPoseDim, poses.mutable_data() + i * kPoseDim);
        }
        return py::make_tuple(shapes, poses);
      },
      py::arg("n"), py::arg("seed") = 0, "(shapes [n, 10], poses [n, 69]) from the default pose pool");

  m.def(
      "grad_check",
      [](const BodyTemplate& b, std::uint64_t seed) {
        return py::module_::import("json").attr("loads")(to_json(run_grad_suite(b, seed)).dump());
      },
      py::arg("body"), py::arg("seed") = 0, "Max relative finite-difference error per checked quantity");

  m.def(
      "infer",
      [](const std::string& checkpoint, const BodyTemplate& b, const std::string& dataset) {
        const HmrModel model = load_model_checkpoint(checkpoint);
        const Dataset data = load_dataset(dataset);
        const auto th = predict_theta(model, b, data);
        Array out({static_cast<py::ssize_t>(th.size()), static_cast<py::ssize_t>(kThetaDim)});
        for (std::size_t i = 0; i < th.size(); ++i)
          std::copy(th[i].values.data(), th[i].values.data() + kThetaDim, out.mutable_data() + i * kThetaDim);
        return out;
      },
      py::arg("checkpoint"), py::arg("body"), py::arg("dataset"), "Theta estimates [N, 85] for a dataset file");
}
