#include "rotonly/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace rotonly {

namespace {

Vec3 vee(const Mat3& a) {
  return {a(2, 1), a(0, 2), a(1, 0)};
}

double clamp_unit(double x) { return std::min(1.0, std::max(-1.0, x)); }

}  // namespace

bool Rotation::is_valid(double tol) const {
  const Mat3 gram = m_.transpose() * m_;
  if ((gram - Mat3::Identity()).norm() > tol) return false;
  return std::abs(m_.determinant() - 1.0) <= tol;
}

Rotation Rotation::renormalized() const { return project_to_rotation(m_); }

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Rotation exp_so3(const Vec3& omega) {
  const double angle = omega.norm();
  const Mat3 w = skew(omega);
  double a, b;  // R = I + a*w + b*w^2
  if (angle < 1e-8) {
    const double a2 = angle * angle;
    a = 1.0 - a2 / 6.0;
    b = 0.5 - a2 / 24.0;
  } else {
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / (angle * angle);
  }
  return Rotation(Mat3::Identity() + a * w + b * (w * w));
}

Vec3 log_so3(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double cos_angle = clamp_unit((m.trace() - 1.0) * 0.5);
  const Vec3 s = vee(m - m.transpose()) * 0.5;  // sin(angle) * axis
  // atan2 keeps the angle well-conditioned on the whole range; dividing by
  // sin(acos(trace)) instead loses ~1/(pi - angle)^2 digits near pi.
  const double angle = std::atan2(s.norm(), cos_angle);

  if (angle < 1e-8) {
    // vee term already equals omega to O(angle^3).
    return s;
  }
  if (M_PI - angle < 1e-6) {
    // The skew part vanishes at pi; recover the axis from the symmetric
    // part instead: (R + R^T)/2 = cos*I + (1 - cos) * u u^T.
    const Mat3 sym = 0.5 * (m + m.transpose());
    const Mat3 outer = (sym - cos_angle * Mat3::Identity()) / (1.0 - cos_angle);
    int col = 0;
    outer.diagonal().maxCoeff(&col);
    Vec3 axis = outer.col(col).normalized();
    if (axis.dot(s) < 0.0) axis = -axis;
    return angle * axis;
  }
  return s.normalized() * angle;
}

Vec3 epipolar_normal(const Rotation& r_ij, const Observation& x_i,
                     const Observation& x_j) {
  return (r_ij.matrix() * x_i.hom()).cross(x_j.hom());
}

std::pair<Rotation, Vec3> relative_pose(const CameraPose& pose_i,
                                        const CameraPose& pose_j) {
  const Mat3& ri = pose_i.rotation.matrix();
  const Mat3& rj = pose_j.rotation.matrix();
  return {Rotation(rj * ri.transpose()),
          rj * (pose_i.translation - pose_j.translation)};
}

Projection project(const CameraPose& pose, const Vec3& point_world) {
  const Vec3 cam = pose.rotation.matrix() * (point_world - pose.translation);
  if (std::abs(cam.z()) < 1e-12) {
    throw std::domain_error("project: point on the camera plane");
  }
  return {Observation{cam.x() / cam.z(), cam.y() / cam.z()}, cam.z()};
}

double rotation_error(const Rotation& r_gt, const Rotation& r_e) {
  const double tr = (r_gt.matrix().transpose() * r_e.matrix()).trace();
  return std::acos(clamp_unit((tr - 1.0) * 0.5));
}

Rotation project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose());
}

}  // namespace rotonly
