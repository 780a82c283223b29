// Deterministic synthetic-scene generation, pixel-noise injection, and the
// Monte-Carlo benchmark driver, plus the independent numerical oracles
// (classical Jacobi eigen-decomposition, midpoint triangulation) used to
// cross-check the closed-form solvers.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rotonly/multi_view.hpp"

namespace rotonly {

enum class SceneKind {
  Standard,
  PlanarScene,
  Holoplane,
  RankRegularLine,
  PureRotation,
  Circular,
  Square,
  Linear,
  OutwardLooking,
};

const char* to_string(SceneKind kind);
std::optional<SceneKind> scene_kind_from_string(const std::string& name);
bool is_two_view_kind(SceneKind kind);

struct SceneSpec {
  SceneKind kind = SceneKind::Standard;
  int n_cameras = 2;
  int n_points = 1000;
  double noise_max_px = 0.0;
  double focal_px = 480.0;
  int image_px = 960;
  // Primary depth scale: sphere radius (Standard/PureRotation), plane height
  // (PlanarScene/RankRegularLine), plane half-extent (Holoplane), maximum
  // point height (Circular/Square/Linear), inner ring radius
  // (OutwardLooking). Zero selects the per-kind default.
  double depth_param = 0.0;
  std::uint64_t seed = 0;
  bool noise_per_axis = false;  // per-axis uniform instead of radial
  int knn = 6;                  // multi-view matching: k nearest cameras
  int min_shared = 30;          // plus all pairs sharing this many points
};

struct GeneratedScene {
  SceneSpec spec;
  std::vector<CameraPose> poses;   // ground truth, aligned with graph.cameras
  std::vector<Vec3> points_world;  // ground truth, aligned with graph.tracks
  ViewGraph graph;                 // noise-free observations
  ViewGraph noisy_graph;           // observations after noise injection
};

// Deterministic per seed; every stored observation satisfies the chirality
// constraint and lands inside the image bounds. Two-view kinds produce
// exactly two cameras (the first at the origin with identity rotation).
// Throws std::invalid_argument on an infeasible spec.
GeneratedScene generate(const SceneSpec& spec);

// Rebuilds noisy_graph with pixel-domain offsets of magnitude U(0, max) and
// uniform direction (or per-axis U(-max, max) when the spec asks for it),
// renormalized by the focal length. Noise streams are keyed per
// (view, track), so edge and track copies of an observation stay consistent.
GeneratedScene add_noise(const GeneratedScene& scene, double noise_max_px,
                         std::uint64_t seed);

// Composes r with a rotation of exactly `angle` radians about a random axis.
Rotation perturb_rotation(const Rotation& r, double angle, std::uint64_t seed);

struct EigenDecomposition {
  std::array<double, 3> values;  // ascending
  Mat3 vectors;                  // columns aligned with values
};

// Classical Jacobi rotations until the off-diagonal norm falls below
// 1e-14 * max(1, |A|_F). Independent of the Cardano path by construction.
EigenDecomposition jacobi_eigen(const Mat3& sym);

// Least-squares point minimizing the sum of squared distances to the
// observation rays. Empty when the ray system is degenerate (condition
// number above 1e8, e.g. pure-rotation inputs).
std::optional<Vec3> triangulate_midpoint(const std::vector<CameraPose>& poses,
                                         const std::vector<Observation>& obs);

struct TrialRow {
  int trial = 0;
  std::string method;
  std::string scene_kind;
  double noise_max_px = 0.0;
  int n_points = 0;
  double error_rad = 0.0;
  bool converged = false;
  int iterations = 0;
  double wall_ms = 0.0;
};

struct RunSpec {
  bool multi_view = false;
  std::vector<SceneKind> scenes = {SceneKind::Standard};
  std::vector<double> noise_levels_px = {0.0};
  std::vector<std::string> methods;  // defaults per mode when empty
  int trials = 10;
  SceneSpec base;                    // counts, focal, image, depth
  double perturb_angle = 0.05;       // initialization perturbation (radians)
  std::uint64_t master_seed = 1;
  int threads = 1;
  // Wall-clock timing breaks byte-level reproducibility of the CSV; it is
  // off by default and the column reads 0.
  bool timing = false;
};

// Deterministic per master seed: every trial derives its own seed, trials
// are independent, and rows come back sorted by (scene, noise, trial,
// method) regardless of thread count or method order. Trial failures are
// recorded as non-converged rows with error NaN rather than aborting.
std::vector<TrialRow> monte_carlo(const RunSpec& spec);

// Default method lists: {"init", "trrm", "pa"} and {"avg", "grrm"}.
std::vector<std::string> default_methods(bool multi_view);

struct AggregateRow {
  std::string scene_kind;
  double noise_max_px = 0.0;
  std::string method;
  int n_ok = 0;
  int n_failed = 0;  // rows whose error is NaN
  double mean_error_rad = 0.0;
  double median_error_rad = 0.0;
};

// Per (scene, noise, method) statistics over the successful trials.
std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& rows);

}  // namespace rotonly
