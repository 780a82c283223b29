// Elementary 3D / SO(3) types and the imaging-equation primitives shared by
// every other module. All observations are normalized camera coordinates: an
// image point is (x, y) with implicit homogeneous form (x, y, 1).
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rotonly {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using ViewId = int;
using TrackId = std::int64_t;

// 3x3 orthonormal matrix with det +1. Construction does not validate; call
// is_valid() at API boundaries and renormalized() after long update chains.
class Rotation {
 public:
  Rotation() = default;
  explicit Rotation(const Mat3& m) : m_(m) {}

  static Rotation identity() { return Rotation(); }

  const Mat3& matrix() const { return m_; }
  Rotation transposed() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& rhs) const {
    return Rotation(m_ * rhs.m_);
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  bool is_valid(double tol = 1e-9) const;

  // Nearest rotation matrix in the Frobenius sense (polar projection).
  Rotation renormalized() const;

 private:
  Mat3 m_ = Mat3::Identity();
};

// Normalized image point; homogeneous form is (x, y, 1).
struct Observation {
  double x = 0.0;
  double y = 0.0;

  Vec3 hom() const { return {x, y, 1.0}; }
  Vec3 bearing() const { return hom().normalized(); }
};

// World-to-camera map X_cam = R * (X_world - t); t is the camera center.
struct CameraPose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();
};

struct PointMatch {
  Observation left;
  Observation right;
  TrackId track = -1;
};

// A matched pair of views with per-point observation pairs.
struct MatchedPair {
  ViewId left_view = 0;
  ViewId right_view = 1;
  std::vector<PointMatch> points;
};

// Cross-product matrix, sign convention skew(a) * b == a x b.
Mat3 skew(const Vec3& v);

// Rodrigues exponential of an axis-angle vector (radians).
Rotation exp_so3(const Vec3& omega);

// Inverse of exp_so3 on angles below pi. Angles within 1e-6 of pi are
// recovered through the symmetric-part branch.
Vec3 log_so3(const Rotation& r);

// Epipolar-normal vector skew(R * hom(x_i)) * hom(x_j). Zero exactly when the
// correspondence is consistent with a pure rotation (or the point sits on the
// baseline / at infinity); its norm measures parallax.
Vec3 epipolar_normal(const Rotation& r_ij, const Observation& x_i,
                     const Observation& x_j);

// Relative motion mapping camera-i coordinates into camera j:
// X_j = R * X_i + t with R = R_j R_i^T, t = R_j (t_i - t_j).
std::pair<Rotation, Vec3> relative_pose(const CameraPose& pose_i,
                                        const CameraPose& pose_j);

struct Projection {
  Observation obs;
  double depth = 0.0;
};

// Perspective projection; throws std::domain_error when the point lies on the
// camera plane (|depth| < 1e-12).
Projection project(const CameraPose& pose, const Vec3& point_world);

// Geodesic distance between two rotations in radians, range [0, pi].
double rotation_error(const Rotation& r_gt, const Rotation& r_e);

// Nearest rotation to an arbitrary 3x3 matrix (polar projection via SVD).
Rotation project_to_rotation(const Mat3& m);

}  // namespace rotonly
