// Command-line front end: scene simulation, degeneracy detection, two-view
// and multi-view rotation optimization, Monte-Carlo benchmarks, and rotation
// evaluation. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical
// failure.
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <json.hpp>

#include "rotonly/rng.hpp"
#include "rotonly/scene_io.hpp"

namespace {

using nlohmann::json;
using namespace rotonly;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct InitSpec {
  bool from_file = false;
  double perturb_rad = 0.0;
  std::string path;
};

InitSpec parse_init(const std::string& arg) {
  InitSpec spec;
  if (arg.rfind("gt-perturb:", 0) == 0) {
    spec.perturb_rad = std::stod(arg.substr(11));
    return spec;
  }
  if (arg.rfind("file:", 0) == 0) {
    spec.from_file = true;
    spec.path = arg.substr(5);
    return spec;
  }
  throw ParseError("--init expects gt-perturb:<rad> or file:<path>");
}

CameraPose require_gt_pose(const ViewGraph& graph, ViewId id) {
  const int idx = graph.camera_index(id);
  if (idx < 0 || !graph.cameras[idx].gt_pose) {
    throw ParseError("camera " + std::to_string(id) +
                     " has no ground-truth pose in the scene file");
  }
  return *graph.cameras[idx].gt_pose;
}

json quaternion_json(const Rotation& r) {
  Eigen::Quaterniond q(r.matrix());
  if (q.w() < 0) q.coeffs() *= -1.0;
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

int run_simulate(const SceneSpec& spec, const std::string& out_path) {
  const GeneratedScene scene = generate(spec);
  write_scene_file(out_path, scene.noisy_graph, spec.focal_px, spec.image_px);
  json summary;
  summary["scene_kind"] = to_string(spec.kind);
  summary["cameras"] = scene.noisy_graph.cameras.size();
  summary["tracks"] = scene.noisy_graph.tracks.size();
  summary["edges"] = scene.noisy_graph.edges.size();
  summary["noise_max_px"] = spec.noise_max_px;
  summary["seed"] = spec.seed;
  summary["out"] = out_path;
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_detect(const std::string& scene_path, double threshold_rs,
               double threshold_pr, int min_shared) {
  const LoadedScene scene = parse_scene_file(scene_path, min_shared);
  for (const MatchedPair& pair : scene.graph.edges) {
    const CameraPose pose_l = require_gt_pose(scene.graph, pair.left_view);
    const CameraPose pose_r = require_gt_pose(scene.graph, pair.right_view);
    const Rotation r_rel = relative_pose(pose_l, pose_r).first;
    const DetectionReport report =
        classify(pair, r_rel, threshold_rs, threshold_pr);
    json line;
    line["pair"] = json::array({pair.left_view, pair.right_view});
    line["v_rs"] = report.v_rs;
    line["theta_mean_sq"] = report.theta_mean_sq;
    line["label"] = to_string(report.label);
    std::cout << line.dump() << '\n';
  }
  return 0;
}

Rotation relative_init_from_file(const std::string& path, ViewId left,
                                 ViewId right) {
  const GlobalRotations rots = parse_rotations_file(path);
  if (rots.ids.size() == 1) return rots.rotations[0];
  return Rotation(rots.of(right).matrix() * rots.of(left).matrix().transpose());
}

int run_optimize_two_view(const std::string& scene_path,
                          const std::string& init_arg, std::uint64_t seed,
                          std::optional<std::pair<int, int>> pair_ids,
                          const std::string& out_rotation, int min_shared,
                          double threshold_rs, double threshold_pr) {
  const LoadedScene scene = parse_scene_file(scene_path, min_shared);
  if (scene.graph.edges.empty()) {
    throw ParseError("scene file yields no matched pair");
  }

  const MatchedPair* pair = nullptr;
  if (pair_ids) {
    for (const MatchedPair& e : scene.graph.edges) {
      if (e.left_view == pair_ids->first && e.right_view == pair_ids->second) {
        pair = &e;
        break;
      }
    }
    if (!pair) throw ParseError("requested pair has no matched points");
  } else if (scene.graph.edges.size() == 1) {
    pair = &scene.graph.edges[0];
  } else {
    throw ParseError("scene has multiple pairs; select one with --pair");
  }

  const InitSpec init = parse_init(init_arg);
  std::optional<Rotation> r_gt;
  {
    const int li = scene.graph.camera_index(pair->left_view);
    const int ri = scene.graph.camera_index(pair->right_view);
    if (li >= 0 && ri >= 0 && scene.graph.cameras[li].gt_pose &&
        scene.graph.cameras[ri].gt_pose) {
      r_gt = relative_pose(*scene.graph.cameras[li].gt_pose,
                           *scene.graph.cameras[ri].gt_pose)
                 .first;
    }
  }
  Rotation r_init;
  if (init.from_file) {
    r_init = relative_init_from_file(init.path, pair->left_view,
                                     pair->right_view);
  } else {
    if (!r_gt) {
      throw ParseError("gt-perturb initialization requires ground-truth poses");
    }
    r_init = perturb_rotation(*r_gt, init.perturb_rad, seed);
  }

  const DetectionReport report =
      classify(*pair, r_init, threshold_rs, threshold_pr);
  const TwoViewProblem problem{*pair, r_init, report.label};
  const TwoViewResult result = optimize_two_view(problem);

  json out;
  out["pair"] = json::array({pair->left_view, pair->right_view});
  out["label"] = to_string(report.label);
  out["v_rs"] = report.v_rs;
  out["theta_mean_sq"] = report.theta_mean_sq;
  out["initial_cost"] =
      result.cost_trace.empty() ? 0.0 : result.cost_trace.front();
  out["final_cost"] =
      result.cost_trace.empty() ? 0.0 : result.cost_trace.back();
  out["iterations"] = result.iterations;
  out["converged"] = result.converged;
  out["rotation_wxyz"] = quaternion_json(result.rotation);
  if (r_gt) {
    out["error_vs_gt_rad"] = rotation_error(*r_gt, result.rotation);
    out["init_error_vs_gt_rad"] = rotation_error(*r_gt, r_init);
  }
  std::cout << out.dump() << '\n';

  if (!out_rotation.empty()) {
    GlobalRotations rots;
    rots.ids = {pair->left_view, pair->right_view};
    rots.rotations = {Rotation::identity(), result.rotation};
    rots.gauge = pair->left_view;
    write_rotations_file(out_rotation, rots);
  }
  return 0;
}

int run_optimize_multi_view(const std::string& scene_path,
                            const std::string& init_arg, std::uint64_t seed,
                            const std::string& out_path, int min_shared,
                            bool two_view_refine, int k_max) {
  const LoadedScene scene = parse_scene_file(scene_path, min_shared);
  if (scene.graph.cameras.size() < 3) {
    throw ParseError("multi-view optimization needs at least 3 cameras");
  }
  if (scene.graph.edges.empty()) {
    throw ParseError("scene file yields no matched pairs");
  }

  const InitSpec init_spec = parse_init(init_arg);
  GlobalRotations init;
  if (init_spec.from_file) {
    init = parse_rotations_file(init_spec.path);
    for (const CameraRecord& cam : scene.graph.cameras) {
      init.of(cam.id);  // throws when a view is missing
    }
  } else {
    std::vector<Rotation> edge_rots;
    for (size_t e = 0; e < scene.graph.edges.size(); ++e) {
      const MatchedPair& pair = scene.graph.edges[e];
      const Rotation rel =
          relative_pose(require_gt_pose(scene.graph, pair.left_view),
                        require_gt_pose(scene.graph, pair.right_view))
              .first;
      Rotation r = perturb_rotation(
          rel, init_spec.perturb_rad,
          CounterRng::derive(seed, static_cast<std::uint64_t>(e)));
      if (two_view_refine) {
        const DetectionReport rep = classify(pair, r);
        if (rep.label != SceneLabel::RotationSingular) {
          r = optimize_two_view({pair, r, rep.label}).rotation;
        }
      }
      edge_rots.push_back(r);
    }
    init = init_rotations(scene.graph, edge_rots);
  }

  LMConfig cfg;
  cfg.k_max = k_max;
  const GlobalResult result = optimize_global(scene.graph, init, cfg);
  write_rotations_file(out_path, result.rotations);

  json out;
  out["cameras"] = scene.graph.cameras.size();
  out["edges"] = scene.graph.edges.size();
  out["initial_cost"] =
      result.cost_trace.empty() ? 0.0 : result.cost_trace.front();
  out["final_cost"] =
      result.cost_trace.empty() ? 0.0 : result.cost_trace.back();
  out["iterations"] = result.iterations;
  out["converged"] = result.converged;
  out["out"] = out_path;

  bool all_gt = true;
  for (const CameraRecord& cam : scene.graph.cameras) {
    if (!cam.gt_pose) all_gt = false;
  }
  if (all_gt) {
    std::vector<ViewId> ids;
    std::vector<Rotation> gt;
    for (const CameraRecord& cam : scene.graph.cameras) {
      ids.push_back(cam.id);
      gt.push_back(cam.gt_pose->rotation);
    }
    out["aligned_error_init_rad"] = aligned_mean_error(init, ids, gt);
    out["aligned_error_final_rad"] =
        aligned_mean_error(result.rotations, ids, gt);
  }
  std::cout << out.dump() << '\n';
  return 0;
}

RunSpec parse_run_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open run spec: " + path);
  RunSpec rs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("run spec line " + std::to_string(line_no) +
                       ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto split = [](const std::string& s) {
      std::vector<std::string> out;
      std::istringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
      }
      return out;
    };
    try {
      if (key == "mode") {
        if (value == "two-view") {
          rs.multi_view = false;
        } else if (value == "multi-view") {
          rs.multi_view = true;
        } else {
          throw ParseError("mode must be two-view or multi-view");
        }
      } else if (key == "scenes") {
        rs.scenes.clear();
        for (const std::string& name : split(value)) {
          const auto kind = scene_kind_from_string(name);
          if (!kind) throw ParseError("unknown scene kind: " + name);
          rs.scenes.push_back(*kind);
        }
      } else if (key == "noise") {
        rs.noise_levels_px.clear();
        for (const std::string& item : split(value)) {
          rs.noise_levels_px.push_back(std::stod(item));
        }
      } else if (key == "methods") {
        rs.methods = split(value);
      } else if (key == "trials") {
        rs.trials = std::stoi(value);
      } else if (key == "points") {
        rs.base.n_points = std::stoi(value);
      } else if (key == "cameras") {
        rs.base.n_cameras = std::stoi(value);
      } else if (key == "seed") {
        rs.master_seed = std::stoull(value);
      } else if (key == "perturb") {
        rs.perturb_angle = std::stod(value);
      } else if (key == "threads") {
        rs.threads = std::stoi(value);
      } else if (key == "timing") {
        rs.timing = std::stoi(value) != 0;
      } else if (key == "focal") {
        rs.base.focal_px = std::stod(value);
      } else if (key == "image") {
        rs.base.image_px = std::stoi(value);
      } else if (key == "depth") {
        rs.base.depth_param = std::stod(value);
      } else if (key == "knn") {
        rs.base.knn = std::stoi(value);
      } else if (key == "min_shared") {
        rs.base.min_shared = std::stoi(value);
      } else if (key == "per_axis_noise") {
        rs.base.noise_per_axis = std::stoi(value) != 0;
      } else {
        throw ParseError("unknown run spec key: " + key);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("run spec line " + std::to_string(line_no) +
                       ": malformed value for " + key);
    }
  }
  return rs;
}

int run_benchmark(const std::string& spec_path, const std::string& out_path,
                  int threads_override) {
  RunSpec rs = parse_run_spec(spec_path);
  if (threads_override > 0) rs.threads = threads_override;
  const std::vector<TrialRow> rows = monte_carlo(rs);
  write_result_csv(out_path, rows);
  for (const AggregateRow& agg : aggregate(rows)) {
    json line;
    line["scene_kind"] = agg.scene_kind;
    line["noise_max_px"] = agg.noise_max_px;
    line["method"] = agg.method;
    line["n_ok"] = agg.n_ok;
    line["n_failed"] = agg.n_failed;
    line["mean_error_rad"] = agg.mean_error_rad;
    line["median_error_rad"] = agg.median_error_rad;
    std::cout << line.dump() << '\n';
  }
  return 0;
}

int run_eval(const std::string& est_path, const std::string& gt_path,
             bool align) {
  const GlobalRotations est = parse_rotations_file(est_path);
  const GlobalRotations gt_rots = parse_rotations_file(gt_path);

  std::vector<ViewId> ids;
  std::vector<Rotation> gt;
  for (ViewId id : est.ids) {
    ids.push_back(id);
    gt.push_back(gt_rots.of(id));  // throws when missing
  }

  std::vector<double> errors;
  if (align) {
    errors = aligned_rotation_errors(est, ids, gt);
  } else {
    for (size_t i = 0; i < ids.size(); ++i) {
      errors.push_back(rotation_error(gt[i], est.of(ids[i])));
    }
  }

  json out;
  json per_view = json::array();
  double sum = 0.0;
  for (size_t i = 0; i < ids.size(); ++i) {
    per_view.push_back({{"view", ids[i]}, {"error_rad", errors[i]}});
    sum += errors[i];
  }
  out["per_view"] = per_view;
  out["mean_error_rad"] = ids.empty() ? 0.0 : sum / ids.size();
  out["aligned"] = align;
  std::cout << out.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotation-only imaging geometry toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI configuration file ([subcommand] "
                                 "sections with key=value entries)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scene file");
  std::string sim_kind = "Standard";
  SceneSpec spec;
  std::string sim_out;
  sim->add_option("--kind", sim_kind, "scene kind")->capture_default_str();
  sim->add_option("--cameras", spec.n_cameras, "camera count")
      ->capture_default_str();
  sim->add_option("--points", spec.n_points, "3D point count")
      ->capture_default_str();
  sim->add_option("--noise", spec.noise_max_px, "max pixel noise (uniform)")
      ->capture_default_str();
  sim->add_option("--focal", spec.focal_px, "focal length in pixels")
      ->capture_default_str();
  sim->add_option("--image", spec.image_px, "image side in pixels")
      ->capture_default_str();
  sim->add_option("--depth", spec.depth_param,
                  "depth scale (0 = per-kind default)")
      ->capture_default_str();
  sim->add_option("--seed", spec.seed, "scene seed")->capture_default_str();
  sim->add_flag("--per-axis-noise", spec.noise_per_axis,
                "per-axis uniform noise instead of radial");
  sim->add_option("--knn", spec.knn, "multi-view matching: nearest cameras")
      ->capture_default_str();
  sim->add_option("--min-shared", spec.min_shared,
                  "multi-view matching: shared-point threshold")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "output scene file")->required();

  // detect
  auto* det = app.add_subcommand("detect", "classify scene structure per pair");
  std::string det_scene;
  double det_rs = 1e-4, det_pr = 1e-9;
  int det_min_shared = 8;
  det->add_option("--scene", det_scene, "scene file")->required();
  det->add_option("--threshold-rs", det_rs,
                  "rotation-singular detection threshold")
      ->capture_default_str();
  det->add_option("--threshold-pr", det_pr, "pure-rotation threshold")
      ->capture_default_str();
  det->add_option("--min-shared", det_min_shared,
                  "minimum shared tracks per rebuilt pair")
      ->capture_default_str();

  // optimize-two-view
  auto* otv = app.add_subcommand("optimize-two-view",
                                 "optimize one relative rotation");
  std::string otv_scene, otv_init = "gt-perturb:0.05", otv_out_rotation;
  std::uint64_t otv_seed = 1;
  std::vector<int> otv_pair;
  int otv_min_shared = 8;
  double otv_rs = 1e-4, otv_pr = 1e-9;
  otv->add_option("--scene", otv_scene, "scene file")->required();
  otv->add_option("--init", otv_init, "gt-perturb:<rad> or file:<path>")
      ->capture_default_str();
  otv->add_option("--seed", otv_seed, "perturbation seed")
      ->capture_default_str();
  otv->add_option("--pair", otv_pair, "left and right view ids")
      ->expected(2);
  otv->add_option("--out-rotation", otv_out_rotation,
                  "write optimized rotation file");
  otv->add_option("--min-shared", otv_min_shared,
                  "minimum shared tracks per rebuilt pair")
      ->capture_default_str();
  otv->add_option("--threshold-rs", otv_rs, "detector threshold")
      ->capture_default_str();
  otv->add_option("--threshold-pr", otv_pr, "detector threshold")
      ->capture_default_str();

  // optimize-multi-view
  auto* omv = app.add_subcommand("optimize-multi-view",
                                 "optimize all camera rotations");
  std::string omv_scene, omv_init = "gt-perturb:0.02", omv_out;
  std::uint64_t omv_seed = 1;
  int omv_min_shared = 8, omv_kmax = 50;
  bool omv_refine = false;
  omv->add_option("--scene", omv_scene, "scene file")->required();
  omv->add_option("--init", omv_init, "gt-perturb:<rad> or file:<path>")
      ->capture_default_str();
  omv->add_option("--seed", omv_seed, "perturbation seed")
      ->capture_default_str();
  omv->add_option("--out", omv_out, "output rotations file")->required();
  omv->add_option("--min-shared", omv_min_shared,
                  "minimum shared tracks per rebuilt pair")
      ->capture_default_str();
  omv->add_option("--k-max", omv_kmax, "LM iteration cap")
      ->capture_default_str();
  omv->add_flag("--two-view-refine", omv_refine,
                "refine per-edge rotations before averaging");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "run a Monte-Carlo sweep");
  std::string bench_spec, bench_out;
  int bench_threads = 0;
  bench->add_option("--spec", bench_spec, "run spec (key=value file)")
      ->required();
  bench->add_option("--out", bench_out, "output CSV path")->required();
  bench->add_option("--threads", bench_threads,
                    "override the run spec thread count");

  // eval
  auto* ev = app.add_subcommand("eval", "compare two rotation files");
  std::string ev_est, ev_gt;
  bool ev_no_align = false;
  ev->add_option("--est", ev_est, "estimated rotations file")->required();
  ev->add_option("--gt", ev_gt, "reference rotations file")->required();
  ev->add_flag("--no-align", ev_no_align,
               "skip the world-frame alignment before measuring");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (sim->parsed()) {
      const auto kind = scene_kind_from_string(sim_kind);
      if (!kind) throw ParseError("unknown scene kind: " + sim_kind);
      spec.kind = *kind;
      if (is_two_view_kind(spec.kind) && !sim->count("--cameras")) {
        spec.n_cameras = 2;
      }
      return run_simulate(spec, sim_out);
    }
    if (det->parsed()) {
      return run_detect(det_scene, det_rs, det_pr, det_min_shared);
    }
    if (otv->parsed()) {
      std::optional<std::pair<int, int>> pair_ids;
      if (!otv_pair.empty()) pair_ids = {otv_pair[0], otv_pair[1]};
      return run_optimize_two_view(otv_scene, otv_init, otv_seed, pair_ids,
                                   otv_out_rotation, otv_min_shared, otv_rs,
                                   otv_pr);
    }
    if (omv->parsed()) {
      return run_optimize_multi_view(omv_scene, omv_init, omv_seed, omv_out,
                                     omv_min_shared, omv_refine, omv_kmax);
    }
    if (bench->parsed()) {
      return run_benchmark(bench_spec, bench_out, bench_threads);
    }
    if (ev->parsed()) {
      return run_eval(ev_est, ev_gt, !ev_no_align);
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
