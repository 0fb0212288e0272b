#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmrk/body_model.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/error.hpp"
#include "hmrk/grad_suite.hpp"
#include "hmrk/metrics.hpp"
#include "hmrk/parallel.hpp"
#include "hmrk/rasterizer.hpp"
#include "hmrk/synth_template.hpp"
#include "hmrk/synthetic_data.hpp"
#include "hmrk/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hmrk {
namespace {

constexpr int kUsageExit = 64;
constexpr int kCheckFailedExit = 10;
constexpr double kGradTolerance = 1e-4;

struct Flags {
  std::string config, out, mode, checkpoint, dataset, model;
  std::optional<std::uint64_t> seed;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidConfig, "config '" + path + "': " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

fs::path out_dir(const Flags& f, const char* fallback) {
  const fs::path dir = f.out.empty() ? fs::path(fallback) : fs::path(f.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

BodyTemplate body_of(const Flags& f) { return f.model.empty() ? synth_template() : load_model(f.model); }

// --dataset names a directory from gen-data or a single dataset file.
fs::path dataset_file(const Flags& f, const char* name) {
  if (f.dataset.empty()) fail(ErrorKind::kInvalidArgument, "--dataset is required");
  const fs::path p(f.dataset);
  return fs::is_directory(p) ? p / name : p;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::kInvalidArgument, std::string(flag) + " is required");
}

void check_threads() {
  const char* env = std::getenv("HMRK_THREADS");
  if (!env) return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v <= 0) {
    fail(ErrorKind::kInvalidConfig, std::string("HMRK_THREADS must be a positive integer, got '") + env + "'");
  }
}

// --- subcommands ---------------------------------------------------------------

int gen_model(const Flags& f) {
  SynthTemplateConfig c;
  if (!f.config.empty()) {
    const json j = read_json(f.config);
    try {
      c.num_vertices = j.value("num_vertices", c.num_vertices);
      c.seed = j.value("seed", c.seed);
      c.leg_length = j.value("leg_length", c.leg_length);
      c.arm_length = j.value("arm_length", c.arm_length);
      c.torso_length = j.value("torso_length", c.torso_length);
      c.girth = j.value("girth", c.girth);
      c.jitter = j.value("jitter", c.jitter);
      if (j.contains("blendshape_magnitudes")) c.blendshape_magnitudes = j.at("blendshape_magnitudes");
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidConfig, std::string("template config: ") + e.what());
    }
  }
  if (f.seed) c.seed = *f.seed;
  const fs::path path = f.out.empty() ? fs::path("body_model.hmrk") : fs::path(f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const BodyTemplate body = synth_template(c);
  save_model(path, body);
  std::cout << json{{"model", path.string()},
                    {"vertices", body.rest_vertices.cols()},
                    {"faces", body.faces.cols()},
                    {"keypoints", body.keypoints.size()}}
                   .dump()
            << "\n";
  return 0;
}

int gen_data(const Flags& f) {
  DataConfig c = f.config.empty() ? DataConfig{} : data_config_from_json(read_json(f.config));
  if (f.seed) c.seed = *f.seed;
  const BodyTemplate body = body_of(f);
  const fs::path dir = out_dir(f, "data");
  const MocapPool pool = sample_pool(c.pool, c.pool_size, derive_seed(c.seed, 1));
  const Dataset train = generate_paired(body, c, pool, c.num_train, derive_seed(c.seed, 2));
  const Dataset val =
      generate_paired(body, c, pool, c.num_val, derive_seed(c.seed, 3), static_cast<std::uint32_t>(c.num_train));
  const json cj = to_json(c);
  save_pool(dir / "pool.bin", pool);
  save_dataset(dir / "train.ds", train, cj);
  save_dataset(dir / "val.ds", val, cj);
  write_json(dir / "data_config.json", cj);
  std::cout << json{{"out", dir.string()}, {"train", train.size()}, {"val", val.size()}, {"pool", pool.size()}}.dump()
            << "\n";
  return 0;
}

int train(const Flags& f) {
  json cj = f.config.empty() ? json::object() : read_json(f.config);
  TrainConfig c = train_config_from_json(cj);
  if (!f.mode.empty()) c.mode = parse_train_mode(f.mode);
  if (f.seed) c.seed = *f.seed;
  const Dataset tr = load_dataset(dataset_file(f, "train.ds"));
  const Dataset val = load_dataset(dataset_file(f, "val.ds"));
  const MocapPool pool = load_pool(dataset_file(f, "pool.bin"));
  // Observation settings follow the data unless the config pins them.
  if (!cj.contains("model") || !cj["model"].contains("observation")) {
    c.model.observation = tr.observation;
    c.model.image_size = tr.image_size;
  }
  c = train_config_from_json(to_json(c));
  const BodyTemplate body = body_of(f);
  std::optional<TrainState> resume;
  if (!f.checkpoint.empty()) resume = load_checkpoint(f.checkpoint);
  const fs::path dir = out_dir(f, "run");
  const TrainResult r = train_loop(c, {body, tr, val, pool}, dir, std::move(resume));
  std::cout << json{{"out", dir.string()},
                    {"steps", r.state.step},
                    {"best_val_reconst", r.state.best_val},
                    {"best_checkpoint", r.best_checkpoint.string()},
                    {"history", r.history_csv.string()}}
                   .dump()
            << "\n";
  return 0;
}

// Flat-camera part image of a posed estimate, as the data generator renders it.
std::vector<std::uint8_t> render_estimate(const ThetaVector& theta, const BodyTemplate& body,
                                          const std::vector<int>& parts, int size) {
  const CameraParams cam = camera_of(theta);
  const CameraParams flat{cam.scale, Eigen::Vector3d::Zero(), cam.translation};
  return render_parts(compose_projection(theta, body).mesh, body.faces, parts, flat, size).labels;
}

// --mode model (default) scores the checkpoint; --mode oracle scores the
// ground-truth Theta.
int eval(const Flags& f) {
  const std::string mode = f.mode.empty() ? "model" : f.mode;
  if (mode != "model" && mode != "oracle") {
    fail(ErrorKind::kInvalidArgument, "eval --mode must be model or oracle, got '" + mode + "'");
  }
  const BodyTemplate body = body_of(f);
  const Dataset data = load_dataset(dataset_file(f, "val.ds"));
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "dataset is empty");
  std::vector<ThetaVector> pred;
  json source;
  if (mode == "oracle") {
    for (const auto& s : data.samples) pred.push_back(s.theta);
    source = "oracle";
  } else {
    require(f.checkpoint, "--checkpoint");
    pred = predict_theta(load_model_checkpoint(f.checkpoint), body, data);
    source = f.checkpoint;
  }
  std::vector<Matrix3X> p3(data.size()), g3(data.size());
  std::vector<std::uint8_t> pl, gl;
  const std::vector<int> parts = vertex_part_labels(body);
  const int size = data.image_size;
  const std::size_t px = static_cast<std::size_t>(size * size);
  pl.resize(data.size() * px);
  gl.resize(data.size() * px);
  parallel_for(data.size(), [&](std::size_t i) {
    const SampleRecord& s = data.samples[i];
    p3[i] = compose_projection(pred[i], body).keypoints3d;
    g3[i] = s.joints3d;
    const auto a = render_estimate(pred[i], body, parts, size);
    const auto b = s.labels.size() == px ? s.labels : render_estimate(s.theta, body, parts, size);
    std::copy(a.begin(), a.end(), pl.begin() + static_cast<std::ptrdiff_t>(i * px));
    std::copy(b.begin(), b.end(), gl.begin() + static_cast<std::ptrdiff_t>(i * px));
  });
  const JointErrorReport jr = evaluate_joints(p3, g3);
  const SegScores seg = seg_scores(pl, gl);
  const fs::path dir = out_dir(f, "eval");
  json report = {{"source", source},
                 {"samples", data.size()},
                 {"joints", to_json(jr)},
                 {"segmentation", to_json(seg)}};
  write_json(dir / "report.json", report);
  write_report_csv(dir / "report.csv", jr);
  std::cout << json{{"mpjpe", jr.mean_mpjpe},
                    {"reconstruction", jr.mean_reconstruction},
                    {"pck", jr.pck},
                    {"auc", jr.auc},
                    {"seg_accuracy", seg.accuracy},
                    {"seg_mean_f1", seg.mean_f1}}
                   .dump()
            << "\n";
  return 0;
}

json theta_json(const ThetaVector& t) {
  const CameraParams cam = camera_of(t);
  return {{"pose", std::vector<double>(t.pose().begin(), t.pose().end())},
          {"shape", std::vector<double>(t.shape().begin(), t.shape().end())},
          {"global_rot", {cam.global_rot.x(), cam.global_rot.y(), cam.global_rot.z()}},
          {"translation", {cam.translation.x(), cam.translation.y()}},
          {"scale", cam.scale}};
}

int infer_cmd(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  const BodyTemplate body = body_of(f);
  const HmrModel model = load_model_checkpoint(f.checkpoint);
  const Dataset data = load_dataset(dataset_file(f, "val.ds"));
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto res = infer(model, body, observation_batch(data, rows));
  const fs::path dir = out_dir(f, "infer");
  json items = json::array();
  for (std::size_t i = 0; i < res.size(); ++i) {
    const std::string obj = "mesh_" + std::to_string(data.samples[i].id) + ".obj";
    export_obj(res[i].projection.mesh, body.faces, dir / obj);
    json item = theta_json(res[i].theta);
    item["id"] = data.samples[i].id;
    item["mesh"] = obj;
    items.push_back(std::move(item));
  }
  write_json(dir / "theta.json", {{"checkpoint", f.checkpoint}, {"estimates", items}});
  std::cout << json{{"out", dir.string()}, {"estimates", res.size()}}.dump() << "\n";
  return 0;
}

// --config may give "pose" [69] and "shape" [10]; the default is the rest pose.
int export_mesh(const Flags& f) {
  const BodyTemplate body = body_of(f);
  PoseVector pose = PoseVector::Zero();
  ShapeCoeffs shape = ShapeCoeffs::Zero();
  if (!f.config.empty()) {
    const json j = read_json(f.config);
    try {
      if (j.contains("pose")) {
        const auto v = j.at("pose").get<std::vector<double>>();
        if (v.size() != kPoseDim) fail(ErrorKind::kShapeMismatch, "pose needs 69 values, got " + std::to_string(v.size()));
        pose = Eigen::Map<const PoseVector>(v.data());
      }
      if (j.contains("shape")) {
        const auto v = j.at("shape").get<std::vector<double>>();
        if (v.size() != kNumShape) fail(ErrorKind::kShapeMismatch, "shape needs 10 values, got " + std::to_string(v.size()));
        shape = Eigen::Map<const ShapeCoeffs>(v.data());
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidConfig, std::string("mesh config: ") + e.what());
    }
  }
  const fs::path path = f.out.empty() ? fs::path("mesh.obj") : fs::path(f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  export_obj(pose_body(body, shape, pose).mesh, body.faces, path);
  std::cout << json{{"mesh", path.string()}}.dump() << "\n";
  return 0;
}

int grad_check(const Flags& f) {
  const BodyTemplate body = body_of(f);
  const auto entries = run_grad_suite(body, f.seed.value_or(0));
  json report = to_json(entries);
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  const bool ok = worst < kGradTolerance;
  json summary = {{"max_rel_error", worst}, {"tolerance", kGradTolerance}, {"pass", ok}};
  if (!f.out.empty()) {
    const fs::path path(f.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_json(path, {{"summary", summary}, {"entries", report}});
  }
  for (const auto& e : entries) {
    std::printf("%-18s %-28s %.3e  (%zu checked)\n", e.subsystem.c_str(), e.name.c_str(), e.max_rel_error, e.checked);
  }
  std::cout << summary.dump() << "\n";
  return ok ? 0 : kCheckFailedExit;
}

void report_error(const char* kind, int code, const std::string& message) {
  std::cerr << json{{"error", kind}, {"code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace
}  // namespace hmrk

int main(int argc, char** argv) {
  using namespace hmrk;
  CLI::App app{"Body mesh recovery toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  std::uint64_t seed = 0;
  app.add_option("--config", f.config, "JSON config file");
  auto* seed_opt = app.add_option("--seed", seed, "seed override");
  app.add_option("--out", f.out, "output file or directory");
  app.add_option("--mode", f.mode, "train: paired | unpaired | no_prior_no_3d; eval: model | oracle");
  app.add_option("--checkpoint", f.checkpoint, "checkpoint to resume from or evaluate");
  app.add_option("--dataset", f.dataset, "dataset directory or file");
  app.add_option("--model", f.model, "body model file (default: built-in template)");

  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Cmd cmds[] = {
      {"gen-model", "write the procedural body model", gen_model},
      {"gen-data", "generate train/val datasets and the pose pool", gen_data},
      {"train", "train encoder, regressor and discriminators", train},
      {"eval", "joint errors and part segmentation scores", eval},
      {"infer", "Theta JSON and one OBJ per input", infer_cmd},
      {"export-mesh", "pose the body model and write an OBJ", export_mesh},
      {"grad-check", "analytic vs finite-difference gradients", grad_check},
  };
  for (const Cmd& c : cmds) app.add_subcommand(c.name, c.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", kUsageExit, e.what());
    return kUsageExit;
  }
  if (seed_opt->count()) f.seed = seed;

  try {
    check_threads();
    for (const Cmd& c : cmds) {
      if (app.got_subcommand(c.name)) return c.run(f);
    }
  } catch (const Error& e) {
    report_error(error_kind_name(e.kind()), static_cast<int>(e.kind()), e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    report_error("internal", 70, e.what());
    return 70;
  }
  return kUsageExit;
}
