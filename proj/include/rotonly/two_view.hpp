// Pose-only reprojection residuals for a matched pair and their condensation
// onto the rotation manifold: the relative translation entering the residual
// is re-solved analytically from the current rotation at every evaluation, so
// the optimization variable is the 3-DoF relative rotation alone.
#pragma once

#include <vector>

#include <Eigen/Core>

#include "rotonly/detector.hpp"
#include "rotonly/geometry.hpp"
#include "rotonly/translation.hpp"

namespace rotonly {

struct TwoViewProblem {
  MatchedPair pair;
  Rotation r_init;
  SceneLabel scene_label = SceneLabel::Regular;
};

// Stacked per-point residual blocks, 6 reals each (view-i block then view-j
// block), with the originating point index per block.
struct ResidualVector {
  Eigen::VectorXd values;
  std::vector<int> point_index;

  int block_count() const { return static_cast<int>(point_index.size()); }
  double squared_norm() const { return values.squaredNorm(); }
};

struct LMConfig {
  double damping_init = 1e-3;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double epsilon = 1e-10;  // relative cost tolerance on accepted steps
  int k_max = 100;
  double fd_step = 1e-6;  // radians, central differences
  bool use_huber = false;
  double huber_scale = 0.01;  // bearing units
};

struct PoseOnlyCoord {
  Vec3 coord = Vec3::Zero();    // third component 1 when valid
  Vec3 bearing = Vec3::Zero();  // unit
  bool coord_valid = false;
};

// Reprojection of the view-i observation into view j given the relative
// rotation and a translation direction. Exactly invariant under scaling or
// flipping of t_dir: the chirality-consistent form
//   w = (theta^T [x_j]x t) R x_i + |theta|^2 t
// is linear in t, and its overall sign is canonicalized so the third
// component of w is non-negative. Correspondences with vanishing parallax
// fall back to the pure-rotation reprojection R x_i.
PoseOnlyCoord pose_only_coord(const Rotation& r_ij, const Vec3& t_dir,
                              const Observation& x_i, const Observation& x_j);

// Stacked bearing-form residual [V^i; V^j]; the view-i block swaps the roles
// of the two views (rotation transposed, translation reversed).
Eigen::Matrix<double, 6, 1> pa_residual(const Rotation& r_ij,
                                        const Vec3& t_dir,
                                        const Observation& x_i,
                                        const Observation& x_j);

// S^j = -[[x_j]x theta]x [R x_i]x; satisfies S t = |theta| Y for the true
// translation. Diagnostic identity used by tests, not on the runtime path.
Mat3 s_matrix(const Rotation& r_ij, const Observation& x_i,
              const Observation& x_j);

// Two-view reprojection residual on the rotation manifold. For pure-rotation
// pairs the translation-free degenerate form is used; otherwise the
// translation direction is the analytic null vector of P^S(r_ij). Throws
// std::runtime_error when the null vector is unresolved (misclassified
// degenerate pair).
ResidualVector trrm_residual(const TwoViewProblem& problem,
                             const Rotation& r_ij);

double trrm_cost(const TwoViewProblem& problem, const Rotation& r_ij);

struct TwoViewResult {
  Rotation rotation;
  std::vector<double> cost_trace;  // accepted costs, starting at the initial
  bool converged = false;
  int iterations = 0;
};

// Levenberg-Marquardt over the local coordinates of the relative rotation,
// R <- exp(delta) R. RotationSingular problems return the initial rotation
// unchanged. Jacobians by central finite differences of the full residual
// (translation re-solved inside each probe).
TwoViewResult optimize_two_view(const TwoViewProblem& problem,
                                const LMConfig& cfg = {});

struct PaResult {
  Rotation rotation;
  Vec3 t_dir = Vec3::UnitX();
  std::vector<double> cost_trace;
  bool converged = false;
  bool degenerate = false;  // translation direction unidentifiable
  int iterations = 0;
};

// Baseline joint optimization over (rotation, translation direction), 5 DoF,
// minimizing the bearing-form pose-only cost with the translation held as an
// explicit variable on the unit sphere.
PaResult optimize_two_view_pa(const TwoViewProblem& problem,
                              const Vec3& t_init, const LMConfig& cfg = {});

}  // namespace rotonly
