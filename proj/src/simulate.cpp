#include "rotonly/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

#include "rotonly/rng.hpp"

namespace rotonly {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;

struct KindInfo {
  SceneKind kind;
  const char* name;
  bool two_view;
};

constexpr KindInfo kKinds[] = {
    {SceneKind::Standard, "Standard", true},
    {SceneKind::PlanarScene, "PlanarScene", true},
    {SceneKind::Holoplane, "Holoplane", true},
    {SceneKind::RankRegularLine, "RankRegularLine", true},
    {SceneKind::PureRotation, "PureRotation", true},
    {SceneKind::Circular, "Circular", false},
    {SceneKind::Square, "Square", false},
    {SceneKind::Linear, "Linear", false},
    {SceneKind::OutwardLooking, "OutwardLooking", false},
};

double default_depth(SceneKind kind) {
  switch (kind) {
    case SceneKind::Standard:
    case SceneKind::PureRotation:
    case SceneKind::Holoplane:
      return 20.0;
    case SceneKind::PlanarScene:
    case SceneKind::RankRegularLine:
      return 10.0;
    case SceneKind::Circular:
    case SceneKind::Square:
    case SceneKind::Linear:
      return 400.0;
    case SceneKind::OutwardLooking:
      return 200.0;
  }
  return 20.0;
}

Rotation per_axis_rotation(CounterRng& rng, double amplitude) {
  const double ax = rng.uniform(-amplitude, amplitude);
  const double ay = rng.uniform(-amplitude, amplitude);
  const double az = rng.uniform(-amplitude, amplitude);
  return exp_so3(Vec3(0, 0, az)) * exp_so3(Vec3(0, ay, 0)) *
         exp_so3(Vec3(ax, 0, 0));
}

struct Visibility {
  bool valid = false;
  Observation obs;
};

Visibility observe(const CameraPose& pose, const Vec3& point, double bound) {
  const Vec3 cam = pose.rotation.matrix() * (point - pose.translation);
  Visibility v;
  if (cam.z() <= 1e-9) return v;
  const double x = cam.x() / cam.z();
  const double y = cam.y() / cam.z();
  if (std::abs(x) > bound || std::abs(y) > bound) return v;
  v.valid = true;
  v.obs = {x, y};
  return v;
}

void validate_spec(const SceneSpec& spec) {
  if (spec.n_points <= 0 || spec.n_cameras <= 0) {
    throw std::invalid_argument("SceneSpec: counts must be positive");
  }
  if (spec.noise_max_px < 0.0 || spec.focal_px <= 0.0 || spec.image_px <= 0) {
    throw std::invalid_argument("SceneSpec: invalid noise/focal/image");
  }
  if (spec.depth_param < 0.0) {
    throw std::invalid_argument("SceneSpec: negative depth parameter");
  }
  if (is_two_view_kind(spec.kind) && spec.n_cameras != 2) {
    throw std::invalid_argument(
        "SceneSpec: two-view scene kinds require exactly 2 cameras");
  }
  if (!is_two_view_kind(spec.kind) && spec.n_cameras < 3) {
    throw std::invalid_argument(
        "SceneSpec: multi-view scene kinds require at least 3 cameras");
  }
}

std::vector<CameraPose> make_two_view_cameras(const SceneSpec& spec,
                                              CounterRng& rng) {
  CameraPose first;  // identity at the origin
  CameraPose second;
  if (spec.kind == SceneKind::PureRotation) {
    second.translation = Vec3::Zero();
  } else {
    do {
      second.translation = rng.in_ball(2.0);
    } while (second.translation.norm() < 0.2);
  }
  second.rotation = per_axis_rotation(rng, 0.5);
  return {first, second};
}

std::vector<CameraPose> make_multi_view_cameras(const SceneSpec& spec,
                                                CounterRng& rng) {
  const int n = spec.n_cameras;
  std::vector<CameraPose> poses(n);
  const double spacing = 10.0;
  switch (spec.kind) {
    case SceneKind::Circular:
    case SceneKind::OutwardLooking: {
      const double radius = spacing / (2.0 * std::sin(M_PI / n));
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * i / n;
        poses[i].translation = {radius * std::cos(a), radius * std::sin(a),
                                0.0};
      }
      break;
    }
    case SceneKind::Square: {
      const double side = spacing * n / 4.0;
      for (int i = 0; i < n; ++i) {
        double s = spacing * i;
        const double half = side / 2.0;
        Vec3 p;
        if (s < side) {
          p = {-half + s, -half, 0.0};
        } else if (s < 2 * side) {
          p = {half, -half + (s - side), 0.0};
        } else if (s < 3 * side) {
          p = {half - (s - 2 * side), half, 0.0};
        } else {
          p = {-half, half - (s - 3 * side), 0.0};
        }
        poses[i].translation = p;
      }
      break;
    }
    case SceneKind::Linear: {
      const double half = spacing * (n - 1) / 2.0;
      for (int i = 0; i < n; ++i) {
        poses[i].translation = {spacing * i - half, 0.0, 0.0};
      }
      break;
    }
    default:
      throw std::invalid_argument("make_multi_view_cameras: two-view kind");
  }

  for (int i = 0; i < n; ++i) {
    Rotation base;
    if (spec.kind == SceneKind::OutwardLooking) {
      const Vec3 radial = Vec3(poses[i].translation.x(),
                               poses[i].translation.y(), 0.0)
                              .normalized();
      Mat3 m;
      const Vec3 r1 = Vec3::UnitZ().cross(radial).normalized();
      const Vec3 r2 = radial.cross(r1);
      m.row(0) = r1;
      m.row(1) = r2;
      m.row(2) = radial;
      base = Rotation(m);
    }
    poses[i].rotation = per_axis_rotation(rng, 0.2) * base;
  }
  return poses;
}

Vec3 sample_point(const SceneSpec& spec, double depth,
                  const std::vector<CameraPose>& poses, CounterRng& rng) {
  switch (spec.kind) {
    case SceneKind::Standard:
    case SceneKind::PureRotation:
      return rng.in_ball(depth);
    case SceneKind::PlanarScene:
      return {rng.uniform(-depth, depth), rng.uniform(-depth, depth), depth};
    case SceneKind::RankRegularLine:
      // Direction and anchor of the line are drawn once per scene by the
      // caller and smuggled in through the rng stream; handled separately.
      throw std::logic_error("sample_point: line kind handled by caller");
    case SceneKind::Holoplane:
      throw std::logic_error("sample_point: holoplane handled by caller");
    case SceneKind::Circular:
    case SceneKind::Square:
    case SceneKind::Linear: {
      double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
      for (const CameraPose& p : poses) {
        min_x = std::min(min_x, p.translation.x());
        max_x = std::max(max_x, p.translation.x());
        min_y = std::min(min_y, p.translation.y());
        max_y = std::max(max_y, p.translation.y());
      }
      const double margin = 30.0;
      return {rng.uniform(min_x - margin, max_x + margin),
              rng.uniform(min_y - margin, max_y + margin),
              rng.uniform(0.0, depth)};
    }
    case SceneKind::OutwardLooking: {
      const double inner = depth;
      const double outer = 15.0 * depth;
      const double r = rng.uniform(inner, outer);
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      return {r * std::cos(a), r * std::sin(a), rng.uniform(-inner, inner)};
    }
  }
  return Vec3::Zero();
}

void build_edges(const SceneSpec& spec, const std::vector<CameraPose>& poses,
                 ViewGraph& graph) {
  const int n = static_cast<int>(graph.cameras.size());

  // Observation lookup per (camera index, track index).
  std::vector<std::vector<int>> obs_of(n);  // track indices per camera
  std::vector<std::map<int, Observation>> obs_map(n);
  for (int t = 0; t < static_cast<int>(graph.tracks.size()); ++t) {
    for (const TrackObservation& to : graph.tracks[t].observations) {
      obs_of[to.view].push_back(t);
      obs_map[to.view][t] = to.obs;
    }
  }

  std::vector<std::vector<int>> nearest(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.push_back({(poses[i].translation - poses[j].translation).norm(), j});
    }
    std::sort(dist.begin(), dist.end());
    for (int k = 0; k < std::min<int>(spec.knn, dist.size()); ++k) {
      nearest[i].push_back(dist[k].second);
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      std::vector<int> common;
      for (int t : obs_of[i]) {
        if (obs_map[j].count(t)) common.push_back(t);
      }
      const bool knn_pair =
          std::count(nearest[i].begin(), nearest[i].end(), j) > 0 ||
          std::count(nearest[j].begin(), nearest[j].end(), i) > 0;
      const bool shared_pair =
          static_cast<int>(common.size()) >= spec.min_shared;
      // k-nearest edges still need enough points for a usable P^S.
      if (!(shared_pair || (knn_pair && common.size() >= 8))) continue;

      MatchedPair pair;
      pair.left_view = i;
      pair.right_view = j;
      for (int t : common) {
        pair.points.push_back(
            {obs_map[i][t], obs_map[j][t], graph.tracks[t].id});
      }
      graph.edges.push_back(std::move(pair));
    }
  }
}

}  // namespace

const char* to_string(SceneKind kind) {
  for (const KindInfo& info : kKinds) {
    if (info.kind == kind) return info.name;
  }
  return "Unknown";
}

std::optional<SceneKind> scene_kind_from_string(const std::string& name) {
  for (const KindInfo& info : kKinds) {
    if (name == info.name) return info.kind;
  }
  return std::nullopt;
}

bool is_two_view_kind(SceneKind kind) {
  for (const KindInfo& info : kKinds) {
    if (info.kind == kind) return info.two_view;
  }
  return true;
}

GeneratedScene generate(const SceneSpec& spec) {
  validate_spec(spec);
  const double depth =
      spec.depth_param > 0.0 ? spec.depth_param : default_depth(spec.kind);
  const double bound = (spec.image_px / 2.0) / spec.focal_px;

  GeneratedScene scene;
  scene.spec = spec;

  CounterRng cam_rng(spec.seed, 0xca0c0ffeULL);
  scene.poses = is_two_view_kind(spec.kind)
                    ? make_two_view_cameras(spec, cam_rng)
                    : make_multi_view_cameras(spec, cam_rng);

  // Holoplane: the plane contains both camera centers and the point
  // (0, 0, 1); RankRegularLine: one random line on the plane z = depth.
  Vec3 plane_u = Vec3::UnitX(), plane_v = Vec3::UnitY();
  Vec3 line_anchor = Vec3::Zero(), line_dir = Vec3::UnitX();
  if (spec.kind == SceneKind::Holoplane) {
    const Vec3 anchor(0.0, 0.0, 1.0);
    Vec3 baseline = scene.poses[1].translation;
    while (baseline.cross(anchor).norm() < 0.1 * baseline.norm() ||
           baseline.norm() < 0.2) {
      baseline = cam_rng.in_ball(2.0);
      scene.poses[1].translation = baseline;
    }
    plane_u = baseline.normalized();
    const Vec3 normal = baseline.cross(anchor).normalized();
    plane_v = normal.cross(plane_u);
  } else if (spec.kind == SceneKind::RankRegularLine) {
    line_anchor = {cam_rng.uniform(-depth / 2, depth / 2),
                   cam_rng.uniform(-depth / 2, depth / 2), depth};
    const double a = cam_rng.uniform(0.0, 2.0 * M_PI);
    line_dir = {std::cos(a), std::sin(a), 0.0};
  }

  CounterRng point_rng(spec.seed, 0x706f696e74ULL);
  const int n_cams = static_cast<int>(scene.poses.size());
  for (int i = 0; i < n_cams; ++i) {
    scene.graph.cameras.push_back({i, scene.poses[i]});
  }

  const long long max_attempts = 20000LL * spec.n_points + 100000LL;
  long long attempts = 0;
  while (static_cast<int>(scene.points_world.size()) < spec.n_points) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument(
          "generate: could not place the requested number of visible points; "
          "the scene specification is infeasible");
    }
    Vec3 p;
    if (spec.kind == SceneKind::Holoplane) {
      p = point_rng.uniform(-depth / 2, depth / 2) * plane_u +
          point_rng.uniform(-depth / 2, depth / 2) * plane_v;
    } else if (spec.kind == SceneKind::RankRegularLine) {
      p = line_anchor + point_rng.uniform(-depth, depth) * line_dir;
    } else {
      p = sample_point(spec, depth, scene.poses, point_rng);
    }

    std::vector<TrackObservation> obs;
    for (int i = 0; i < n_cams; ++i) {
      const Visibility v = observe(scene.poses[i], p, bound);
      if (v.valid) obs.push_back({i, v.obs});
    }
    const bool accept = is_two_view_kind(spec.kind)
                            ? obs.size() == 2
                            : obs.size() >= 2;
    if (!accept) continue;

    Track track;
    track.id = static_cast<TrackId>(scene.points_world.size());
    track.gt_point = p;
    track.observations = std::move(obs);
    scene.graph.tracks.push_back(std::move(track));
    scene.points_world.push_back(p);
  }

  if (is_two_view_kind(spec.kind)) {
    MatchedPair pair;
    pair.left_view = 0;
    pair.right_view = 1;
    for (const Track& t : scene.graph.tracks) {
      pair.points.push_back(
          {t.observations[0].obs, t.observations[1].obs, t.id});
    }
    scene.graph.edges.push_back(std::move(pair));
  } else {
    build_edges(spec, scene.poses, scene.graph);
  }

  scene.noisy_graph = scene.graph;
  if (spec.noise_max_px > 0.0) {
    scene = add_noise(scene, spec.noise_max_px,
                      CounterRng::derive(spec.seed, kNoiseStream));
  }
  return scene;
}

GeneratedScene add_noise(const GeneratedScene& scene, double noise_max_px,
                         std::uint64_t seed) {
  if (noise_max_px < 0.0) {
    throw std::invalid_argument("add_noise: negative noise bound");
  }
  GeneratedScene out = scene;
  out.noisy_graph = scene.graph;
  if (noise_max_px == 0.0) return out;

  const double focal = scene.spec.focal_px;
  const auto offset_of = [&](ViewId view, TrackId track) -> Eigen::Vector2d {
    CounterRng rng(CounterRng::derive(seed, static_cast<std::uint64_t>(view)),
                   static_cast<std::uint64_t>(track));
    if (scene.spec.noise_per_axis) {
      return {rng.uniform(-noise_max_px, noise_max_px) / focal,
              rng.uniform(-noise_max_px, noise_max_px) / focal};
    }
    const double rho = rng.uniform(0.0, noise_max_px);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    return {rho * std::cos(phi) / focal, rho * std::sin(phi) / focal};
  };

  for (Track& t : out.noisy_graph.tracks) {
    for (TrackObservation& to : t.observations) {
      const Eigen::Vector2d d = offset_of(to.view, t.id);
      to.obs.x += d.x();
      to.obs.y += d.y();
    }
  }
  for (MatchedPair& pair : out.noisy_graph.edges) {
    for (PointMatch& pm : pair.points) {
      const Eigen::Vector2d dl = offset_of(pair.left_view, pm.track);
      pm.left.x += dl.x();
      pm.left.y += dl.y();
      const Eigen::Vector2d dr = offset_of(pair.right_view, pm.track);
      pm.right.x += dr.x();
      pm.right.y += dr.y();
    }
  }
  return out;
}

Rotation perturb_rotation(const Rotation& r, double angle,
                          std::uint64_t seed) {
  if (angle < 0.0) {
    throw std::invalid_argument("perturb_rotation: negative angle");
  }
  if (angle == 0.0) return r;
  CounterRng rng(seed, 0x70657274ULL);
  return exp_so3(angle * rng.unit_vector()) * r;
}

EigenDecomposition jacobi_eigen(const Mat3& sym) {
  if ((sym - sym.transpose()).norm() > 1e-9 * std::max(1.0, sym.norm())) {
    throw std::invalid_argument("jacobi_eigen: matrix is not symmetric");
  }
  Mat3 a = 0.5 * (sym + sym.transpose());
  Mat3 v = Mat3::Identity();
  const double tol = 1e-14 * std::max(1.0, a.norm());

  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = std::sqrt(a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) +
                                 a(1, 2) * a(1, 2));
    if (off < tol) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t =
            (theta >= 0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Mat3 g = Mat3::Identity();
        g(p, p) = c;
        g(q, q) = c;
        g(p, q) = s;
        g(q, p) = -s;
        a = g.transpose() * a * g;
        v = v * g;
      }
    }
  }

  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return a(x, x) < a(y, y); });
  EigenDecomposition out;
  for (int i = 0; i < 3; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

std::optional<Vec3> triangulate_midpoint(const std::vector<CameraPose>& poses,
                                         const std::vector<Observation>& obs) {
  if (poses.size() != obs.size() || poses.size() < 2) {
    throw std::invalid_argument("triangulate_midpoint: need >= 2 rays");
  }
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (size_t i = 0; i < poses.size(); ++i) {
    const Vec3 dir =
        (poses[i].rotation.matrix().transpose() * obs[i].hom()).normalized();
    const Mat3 proj = Mat3::Identity() - dir * dir.transpose();
    a += proj;
    b += proj * poses[i].translation;
  }
  const EigenDecomposition eig = jacobi_eigen(a);
  if (eig.values[0] <= 0.0 || eig.values[2] / eig.values[0] > 1e8) {
    return std::nullopt;
  }
  return Vec3(a.ldlt().solve(b));
}

std::vector<std::string> default_methods(bool multi_view) {
  if (multi_view) return {"avg", "grrm"};
  return {"init", "trrm", "pa"};
}

namespace {

std::vector<TrialRow> run_two_view_trial(const RunSpec& rs, SceneKind kind,
                                         double noise, int trial,
                                         std::uint64_t seed,
                                         const std::vector<std::string>& methods) {
  SceneSpec spec = rs.base;
  spec.kind = kind;
  spec.n_cameras = 2;
  spec.noise_max_px = noise;
  spec.seed = seed;
  const GeneratedScene scene = generate(spec);
  const MatchedPair& pair = scene.noisy_graph.edges.at(0);

  const auto [r_gt, t_gt] = relative_pose(scene.poses[0], scene.poses[1]);
  (void)t_gt;
  const Rotation r_init =
      perturb_rotation(r_gt, rs.perturb_angle, CounterRng::derive(seed, kInitStream));
  const DetectionReport report = classify(pair, r_init);

  std::vector<TrialRow> rows;
  for (const std::string& method : methods) {
    TrialRow row;
    row.trial = trial;
    row.method = method;
    row.scene_kind = to_string(kind);
    row.noise_max_px = noise;
    row.n_points = spec.n_points;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (method == "init") {
        row.error_rad = rotation_error(r_gt, r_init);
        row.converged = true;
      } else if (method == "trrm") {
        const TwoViewProblem problem{pair, r_init, report.label};
        const TwoViewResult res = optimize_two_view(problem);
        row.error_rad = rotation_error(r_gt, res.rotation);
        row.converged = res.converged;
        row.iterations = res.iterations;
      } else if (method == "pa") {
        const TwoViewProblem problem{pair, r_init, report.label};
        const TranslationSolution sol =
            solve_translation(accumulate_ps(pair, r_init));
        const Vec3 t_init = sol.direction.value_or(Vec3::UnitX());
        const PaResult res = optimize_two_view_pa(problem, t_init);
        row.error_rad = rotation_error(r_gt, res.rotation);
        row.converged = res.converged && !res.degenerate;
        row.iterations = res.iterations;
      } else {
        throw std::invalid_argument("monte_carlo: unknown method " + method);
      }
    } catch (const std::exception&) {
      row.error_rad = std::numeric_limits<double>::quiet_NaN();
      row.converged = false;
    }
    if (rs.timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TrialRow> run_multi_view_trial(const RunSpec& rs, SceneKind kind,
                                           double noise, int trial,
                                           std::uint64_t seed,
                                           const std::vector<std::string>& methods) {
  SceneSpec spec = rs.base;
  spec.kind = kind;
  spec.noise_max_px = noise;
  spec.seed = seed;
  const GeneratedScene scene = generate(spec);

  std::vector<ViewId> ids;
  std::vector<Rotation> gt;
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    ids.push_back(scene.graph.cameras[i].id);
    gt.push_back(scene.poses[i].rotation);
  }

  std::vector<Rotation> edge_rots;
  for (size_t e = 0; e < scene.noisy_graph.edges.size(); ++e) {
    const MatchedPair& pair = scene.noisy_graph.edges[e];
    const int li = scene.noisy_graph.camera_index(pair.left_view);
    const int ri = scene.noisy_graph.camera_index(pair.right_view);
    const Rotation rel = relative_pose(scene.poses[li], scene.poses[ri]).first;
    edge_rots.push_back(perturb_rotation(
        rel, rs.perturb_angle,
        CounterRng::derive(seed, kInitStream + 1 + static_cast<std::uint64_t>(e))));
  }

  std::vector<TrialRow> rows;
  GlobalRotations init;
  double init_error = std::numeric_limits<double>::quiet_NaN();
  bool init_ok = false;
  try {
    init = init_rotations(scene.noisy_graph, edge_rots);
    init_error = aligned_mean_error(init, ids, gt);
    init_ok = true;
  } catch (const std::exception&) {
  }

  for (const std::string& method : methods) {
    TrialRow row;
    row.trial = trial;
    row.method = method;
    row.scene_kind = to_string(kind);
    row.noise_max_px = noise;
    row.n_points = spec.n_points;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (method == "avg") {
        if (!init_ok) throw std::runtime_error("initializer failed");
        row.error_rad = init_error;
        row.converged = true;
      } else if (method == "grrm") {
        if (!init_ok) throw std::runtime_error("initializer failed");
        LMConfig cfg;
        cfg.k_max = 50;
        const GlobalResult res =
            optimize_global(scene.noisy_graph, init, cfg);
        row.error_rad = aligned_mean_error(res.rotations, ids, gt);
        row.converged = res.converged;
        row.iterations = res.iterations;
      } else {
        throw std::invalid_argument("monte_carlo: unknown method " + method);
      }
    } catch (const std::exception&) {
      row.error_rad = std::numeric_limits<double>::quiet_NaN();
      row.converged = false;
    }
    if (rs.timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<TrialRow> monte_carlo(const RunSpec& rs) {
  if (rs.trials <= 0) {
    throw std::invalid_argument("monte_carlo: trials must be positive");
  }
  const std::vector<std::string> methods =
      rs.methods.empty() ? default_methods(rs.multi_view) : rs.methods;

  struct Task {
    SceneKind kind;
    double noise;
    int trial;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  std::uint64_t index = 0;
  for (SceneKind kind : rs.scenes) {
    for (double noise : rs.noise_levels_px) {
      for (int t = 0; t < rs.trials; ++t) {
        tasks.push_back(
            {kind, noise, t, CounterRng::derive(rs.master_seed, index)});
        ++index;
      }
    }
  }

  std::vector<std::vector<TrialRow>> results(tasks.size());
  const auto worker = [&](std::atomic<size_t>& next) {
    for (size_t i = next.fetch_add(1); i < tasks.size();
         i = next.fetch_add(1)) {
      const Task& task = tasks[i];
      results[i] = rs.multi_view
                       ? run_multi_view_trial(rs, task.kind, task.noise,
                                              task.trial, task.seed, methods)
                       : run_two_view_trial(rs, task.kind, task.noise,
                                            task.trial, task.seed, methods);
    }
  };

  const int threads = std::max(1, rs.threads);
  if (threads == 1) {
    std::atomic<size_t> next{0};
    worker(next);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) {
      pool.emplace_back([&] { worker(next); });
    }
    for (std::thread& th : pool) th.join();
  }

  std::vector<TrialRow> rows;
  for (std::vector<TrialRow>& r : results) {
    for (TrialRow& row : r) rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const TrialRow& a, const TrialRow& b) {
              return std::tie(a.scene_kind, a.noise_max_px, a.trial,
                              a.method) <
                     std::tie(b.scene_kind, b.noise_max_px, b.trial, b.method);
            });
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& rows) {
  std::map<std::tuple<std::string, double, std::string>, std::vector<double>>
      ok;
  std::map<std::tuple<std::string, double, std::string>, int> failed;
  for (const TrialRow& row : rows) {
    const auto key = std::make_tuple(row.scene_kind, row.noise_max_px,
                                     row.method);
    if (std::isnan(row.error_rad)) {
      ++failed[key];
      ok[key];  // make the group visible even if every trial failed
    } else {
      ok[key].push_back(row.error_rad);
    }
  }
  std::vector<AggregateRow> out;
  for (auto& [key, errors] : ok) {
    AggregateRow agg;
    agg.scene_kind = std::get<0>(key);
    agg.noise_max_px = std::get<1>(key);
    agg.method = std::get<2>(key);
    agg.n_ok = static_cast<int>(errors.size());
    agg.n_failed = failed.count(key) ? failed[key] : 0;
    if (!errors.empty()) {
      agg.mean_error_rad =
          std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
      std::sort(errors.begin(), errors.end());
      const size_t n = errors.size();
      agg.median_error_rad = n % 2 ? errors[n / 2]
                                   : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

}  // namespace rotonly
