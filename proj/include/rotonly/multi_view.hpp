// Global rotation estimation over a view graph: spanning-tree + iterative
// chordal averaging initialization, analytical-depth-weighted global
// reprojection residuals, and Levenberg-Marquardt over all camera rotations
// with one gauge view pinned.
#pragma once

#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "rotonly/two_view.hpp"

namespace rotonly {

struct CameraRecord {
  ViewId id = 0;
  std::optional<CameraPose> gt_pose;
};

struct TrackObservation {
  ViewId view = 0;
  Observation obs;
};

struct Track {
  TrackId id = -1;
  std::optional<Vec3> gt_point;
  std::vector<TrackObservation> observations;
};

struct ViewGraph {
  std::vector<CameraRecord> cameras;
  std::vector<MatchedPair> edges;
  std::vector<Track> tracks;

  int camera_index(ViewId id) const;  // -1 when absent
};

// Per-view rotations aligned with ids; the gauge view stays fixed during
// optimization and is pinned to identity by the initializer.
struct GlobalRotations {
  std::vector<ViewId> ids;
  std::vector<Rotation> rotations;
  ViewId gauge = 0;

  const Rotation& of(ViewId id) const;
  Rotation& of(ViewId id);
};

struct EdgeWeighting {
  // |theta| per (edge index, track id).
  std::map<std::pair<int, TrackId>, double> theta_norm;
  // omega_ik = sum of |theta| over the edges at (view, track).
  std::map<std::pair<ViewId, TrackId>, double> omega_sum;
  // Normalized weight per (edge index, view, track); sums to 1 over the
  // edges of each surviving (view, track).
  std::map<std::tuple<int, ViewId, TrackId>, double> omega;
};

// Closed-form depths d_i = |[x_j]x t| / |theta|, d_j = |[R x_i]x t| / |theta|
// for a correspondence under relative motion (r_ij, t_ij). Empty when the
// parallax vanishes (|theta| < 1e-14); the caller must drop the term.
std::optional<std::pair<double, double>> analytical_depths(
    const Rotation& r_ij, const Vec3& t_ij, const Observation& x_i,
    const Observation& x_j);

EdgeWeighting edge_weights(const ViewGraph& graph,
                           const GlobalRotations& rotations);

// Weighted global reprojection residual of track k in the given view
// (coordinate form, third component zero). Empty when every edge at the
// block is degenerate.
std::optional<Vec3> grrm_residual(const ViewGraph& graph,
                                  const GlobalRotations& rotations,
                                  ViewId view, TrackId track);

// Sum of squared residuals over all surviving (view, track) blocks. Depends
// on relative rotations only: invariant under a common world-frame rotation
// applied to every camera (right multiplication).
double f_grrm(const ViewGraph& graph, const GlobalRotations& rotations);

// Spanning-tree composition seeded at the lowest-id view (pinned to
// identity), then iterative chordal L2 refinement with a final IRLS phase
// (Cauchy weights, scale 5x the median chordal residual). edge_rotations is
// aligned with graph.edges. Throws on a disconnected graph.
GlobalRotations init_rotations(const ViewGraph& graph,
                               const std::vector<Rotation>& edge_rotations);

struct GlobalResult {
  GlobalRotations rotations;
  std::vector<double> cost_trace;
  bool converged = false;
  int iterations = 0;
};

// LM over the 3(n-1) local coordinates of the non-gauge views. Per-edge
// translation directions are re-solved analytically inside every residual
// and probe evaluation; the surviving block set is frozen per iteration.
GlobalResult optimize_global(const ViewGraph& graph,
                             const GlobalRotations& init,
                             const LMConfig& cfg = {});

// Right-multiplied world-frame alignment Q = argmin sum |R_est Q - R_gt|^2,
// then per-view geodesic errors of (R_est Q, R_gt).
std::vector<double> aligned_rotation_errors(const GlobalRotations& est,
                                            const std::vector<ViewId>& ids,
                                            const std::vector<Rotation>& gt);

double aligned_mean_error(const GlobalRotations& est,
                          const std::vector<ViewId>& ids,
                          const std::vector<Rotation>& gt);

}  // namespace rotonly
