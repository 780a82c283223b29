#include "rotonly/two_view.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace rotonly {

namespace {

// Below this parallax (relative to the observation scale) the epipolar
// normal carries only rounding noise and the reprojection degenerates to the
// pure-rotation form R x_i.
constexpr double kThetaDegenerateRel = 1e-13;

// A chirality-corrected reprojection numerator smaller than this fraction of
// its construction scale means the candidate translation is (numerically)
// parallel to the reprojected ray; same degenerate limit applies.
constexpr double kNumeratorRel = 1e-9;

struct RawCoord {
  Vec3 w;             // un-normalized reprojection numerator
  bool degenerate;    // true when the pure-rotation limit was taken
};

RawCoord reprojection_numerator(const Rotation& r_ij, const Vec3& t_dir,
                                const Vec3& xi_h, const Vec3& xj_h) {
  const Vec3 rxi = r_ij.matrix() * xi_h;
  const Vec3 theta = rxi.cross(xj_h);
  const double theta_sq = theta.squaredNorm();
  const double obs_scale = rxi.norm() * xj_h.norm();

  if (theta_sq <= kThetaDegenerateRel * kThetaDegenerateRel * obs_scale *
                      obs_scale) {
    return {rxi, true};
  }

  // w = (theta . (x_j x t)) R x_i + |theta|^2 t  ==  S t, which equals
  // |theta| Y for the chirality-consistent translation and is linear in t,
  // so the direction below is exactly invariant to the sign and magnitude
  // of t_dir once the overall sign is canonicalized.
  const double c = theta.dot(xj_h.cross(t_dir));
  Vec3 w = c * rxi + theta_sq * t_dir;

  const double w_ref = std::abs(c) * rxi.norm() + theta_sq * t_dir.norm();
  if (w.norm() <= kNumeratorRel * w_ref || w_ref == 0.0) {
    return {rxi, true};
  }
  if (w.z() < 0.0) w = -w;
  return {w, false};
}

Eigen::Matrix<double, 3, 1> bearing_block(const Rotation& r, const Vec3& t,
                                          const Observation& from,
                                          const Observation& to) {
  const RawCoord rc =
      reprojection_numerator(r, t, from.hom(), to.hom());
  return to.bearing() - rc.w.normalized();
}

double huber_rho(double s2, double delta) {
  const double s = std::sqrt(s2);
  if (s <= delta) return s2;
  return 2.0 * delta * s - delta * delta;
}

// Residual of the condensed objective with optional Huber weighting; used by
// the LM drivers only (the plain cost is trrm_cost).
Eigen::VectorXd weighted_values(const ResidualVector& r, const LMConfig& cfg) {
  if (!cfg.use_huber) return r.values;
  Eigen::VectorXd out = r.values;
  for (int b = 0; b < r.block_count(); ++b) {
    const double s2 = out.segment<6>(6 * b).squaredNorm();
    if (s2 > 0.0) {
      const double w = std::sqrt(huber_rho(s2, cfg.huber_scale) / s2);
      out.segment<6>(6 * b) *= w;
    }
  }
  return out;
}

void validate(const LMConfig& cfg) {
  if (cfg.damping_init <= 0.0 || cfg.damping_up <= 1.0 ||
      cfg.damping_down <= 0.0 || cfg.damping_down >= 1.0 ||
      cfg.epsilon <= 0.0 || cfg.k_max <= 0 || cfg.fd_step <= 0.0) {
    throw std::invalid_argument("LMConfig: invalid parameter set");
  }
}

}  // namespace

PoseOnlyCoord pose_only_coord(const Rotation& r_ij, const Vec3& t_dir,
                              const Observation& x_i, const Observation& x_j) {
  const RawCoord rc = reprojection_numerator(r_ij, t_dir, x_i.hom(), x_j.hom());
  PoseOnlyCoord out;
  out.bearing = rc.w.normalized();
  out.coord_valid = std::abs(rc.w.z()) >= 1e-12 * rc.w.norm();
  if (out.coord_valid) out.coord = rc.w / rc.w.z();
  return out;
}

Eigen::Matrix<double, 6, 1> pa_residual(const Rotation& r_ij, const Vec3& t_dir,
                                        const Observation& x_i,
                                        const Observation& x_j) {
  Eigen::Matrix<double, 6, 1> out;
  const Rotation r_ji = r_ij.transposed();
  out.head<3>() = bearing_block(r_ji, -(r_ji.matrix() * t_dir), x_j, x_i);
  out.tail<3>() = bearing_block(r_ij, t_dir, x_i, x_j);
  return out;
}

Mat3 s_matrix(const Rotation& r_ij, const Observation& x_i,
              const Observation& x_j) {
  const Vec3 rxi = r_ij.matrix() * x_i.hom();
  const Vec3 theta = rxi.cross(x_j.hom());
  return -skew(x_j.hom().cross(theta)) * skew(rxi);
}

ResidualVector trrm_residual(const TwoViewProblem& problem,
                             const Rotation& r_ij) {
  if (problem.scene_label == SceneLabel::RotationSingular) {
    throw std::invalid_argument(
        "trrm_residual: rotation-singular pair must be excluded upstream");
  }
  if (problem.pair.points.empty()) {
    throw std::invalid_argument("trrm_residual: empty pair");
  }

  const int m = static_cast<int>(problem.pair.points.size());
  ResidualVector out;
  out.values.resize(6 * m);
  out.point_index.resize(m);

  if (problem.scene_label == SceneLabel::PureRotationLike) {
    const Mat3& r = r_ij.matrix();
    for (int k = 0; k < m; ++k) {
      const PointMatch& pm = problem.pair.points[k];
      out.values.segment<3>(6 * k) =
          pm.left.bearing() - (r.transpose() * pm.right.hom()).normalized();
      out.values.segment<3>(6 * k + 3) =
          pm.right.bearing() - (r * pm.left.hom()).normalized();
      out.point_index[k] = k;
    }
    return out;
  }

  const TranslationSolution sol =
      solve_translation(accumulate_ps(problem.pair, r_ij));
  if (!sol.direction) {
    throw std::runtime_error(
        "trrm_residual: translation direction unresolved; pair is degenerate "
        "and was misclassified upstream");
  }
  for (int k = 0; k < m; ++k) {
    const PointMatch& pm = problem.pair.points[k];
    out.values.segment<6>(6 * k) =
        pa_residual(r_ij, *sol.direction, pm.left, pm.right);
    out.point_index[k] = k;
  }
  return out;
}

double trrm_cost(const TwoViewProblem& problem, const Rotation& r_ij) {
  return trrm_residual(problem, r_ij).squared_norm();
}

TwoViewResult optimize_two_view(const TwoViewProblem& problem,
                                const LMConfig& cfg) {
  validate(cfg);
  if (problem.scene_label == SceneLabel::RotationSingular) {
    return {problem.r_init, {}, false, 0};
  }

  const auto eval = [&](const Rotation& r) {
    return weighted_values(trrm_residual(problem, r), cfg);
  };

  Rotation rot = problem.r_init;
  Eigen::VectorXd res = eval(rot);
  double cost = res.squaredNorm();
  if (!std::isfinite(cost)) {
    throw std::runtime_error("optimize_two_view: non-finite initial cost");
  }

  TwoViewResult result;
  result.cost_trace.push_back(cost);

  double damping = cfg.damping_init;
  int accepted = 0;
  for (int iter = 0; iter < cfg.k_max; ++iter) {
    result.iterations = iter + 1;

    Eigen::Matrix<double, Eigen::Dynamic, 3> jac(res.size(), 3);
    for (int a = 0; a < 3; ++a) {
      Vec3 axis = Vec3::Zero();
      axis[a] = cfg.fd_step;
      const Eigen::VectorXd plus = eval(exp_so3(axis) * rot);
      const Eigen::VectorXd minus = eval(exp_so3(-axis) * rot);
      jac.col(a) = (plus - minus) / (2.0 * cfg.fd_step);
    }
    const Mat3 jtj = jac.transpose() * jac;
    const Vec3 grad = jac.transpose() * res;
    const Vec3 diag = jtj.diagonal().cwiseMax(1e-12);

    bool stepped = false;
    while (damping <= 1e12) {
      const Mat3 lhs = jtj + (damping * diag).asDiagonal().toDenseMatrix();
      const Vec3 delta = lhs.ldlt().solve(-grad);
      const Rotation candidate = exp_so3(delta) * rot;
      const Eigen::VectorXd cand_res = eval(candidate);
      const double cand_cost = cand_res.squaredNorm();
      if (std::isfinite(cand_cost) && cand_cost < cost) {
        const double drop = (cost - cand_cost) / std::max(cost, 1e-300);
        rot = candidate;
        res = cand_res;
        cost = cand_cost;
        result.cost_trace.push_back(cost);
        damping = std::max(damping * cfg.damping_down, 1e-12);
        if (++accepted % 50 == 0) rot = rot.renormalized();
        stepped = true;
        if (drop < cfg.epsilon) result.converged = true;
        break;
      }
      // The cost cannot move by more than epsilon at this point; that is
      // convergence, not failure, even though the step is rejected.
      if (std::isfinite(cand_cost) &&
          std::abs(cand_cost - cost) / std::max(cost, 1e-300) < cfg.epsilon) {
        result.converged = true;
        break;
      }
      damping *= cfg.damping_up;
    }
    if (!stepped && !result.converged) break;  // damping overflow
    if (result.converged) break;
  }

  result.rotation = rot.renormalized();
  return result;
}

PaResult optimize_two_view_pa(const TwoViewProblem& problem, const Vec3& t_init,
                              const LMConfig& cfg) {
  validate(cfg);
  if (t_init.norm() == 0.0) {
    throw std::invalid_argument("optimize_two_view_pa: zero initial translation");
  }
  if (problem.pair.points.empty()) {
    throw std::invalid_argument("optimize_two_view_pa: empty pair");
  }

  const int m = static_cast<int>(problem.pair.points.size());
  const auto eval = [&](const Rotation& r, const Vec3& t) {
    ResidualVector rv;
    rv.values.resize(6 * m);
    rv.point_index.resize(m);
    for (int k = 0; k < m; ++k) {
      const PointMatch& pm = problem.pair.points[k];
      rv.values.segment<6>(6 * k) = pa_residual(r, t, pm.left, pm.right);
      rv.point_index[k] = k;
    }
    return weighted_values(rv, cfg);
  };

  PaResult result;
  {
    const ObservationSummary s = accumulate_ps(problem.pair, problem.r_init);
    result.degenerate = s.trace / static_cast<double>(s.m) < 1e-9;
  }

  Rotation rot = problem.r_init;
  Vec3 t = t_init.normalized();
  Eigen::VectorXd res = eval(rot, t);
  double cost = res.squaredNorm();
  if (!std::isfinite(cost)) {
    throw std::runtime_error("optimize_two_view_pa: non-finite initial cost");
  }
  result.cost_trace.push_back(cost);

  using Vec5 = Eigen::Matrix<double, 5, 1>;
  using Mat5 = Eigen::Matrix<double, 5, 5>;

  double damping = cfg.damping_init;
  int accepted = 0;
  for (int iter = 0; iter < cfg.k_max; ++iter) {
    result.iterations = iter + 1;

    // Tangent basis of the unit sphere at the current translation, fixed for
    // the duration of this iteration.
    const Vec3 b1 = t.unitOrthogonal();
    const Vec3 b2 = t.cross(b1);
    const auto retract = [&](const Vec5& u) {
      const Rotation r2 = exp_so3(u.head<3>()) * rot;
      const Vec3 t2 = (t + u[3] * b1 + u[4] * b2).normalized();
      return std::make_pair(r2, t2);
    };

    Eigen::Matrix<double, Eigen::Dynamic, 5> jac(res.size(), 5);
    for (int a = 0; a < 5; ++a) {
      Vec5 u = Vec5::Zero();
      u[a] = cfg.fd_step;
      const auto [rp, tp] = retract(u);
      u[a] = -cfg.fd_step;
      const auto [rm, tm] = retract(u);
      jac.col(a) = (eval(rp, tp) - eval(rm, tm)) / (2.0 * cfg.fd_step);
    }
    const Mat5 jtj = jac.transpose() * jac;
    const Vec5 grad = jac.transpose() * res;
    const Vec5 diag = jtj.diagonal().cwiseMax(1e-12);

    bool stepped = false;
    while (damping <= 1e12) {
      const Mat5 lhs = jtj + (damping * diag).asDiagonal().toDenseMatrix();
      const Vec5 delta = lhs.ldlt().solve(-grad);
      const auto [cand_r, cand_t] = retract(delta);
      const Eigen::VectorXd cand_res = eval(cand_r, cand_t);
      const double cand_cost = cand_res.squaredNorm();
      if (std::isfinite(cand_cost) && cand_cost < cost) {
        const double drop = (cost - cand_cost) / std::max(cost, 1e-300);
        rot = cand_r;
        t = cand_t;
        res = cand_res;
        cost = cand_cost;
        result.cost_trace.push_back(cost);
        damping = std::max(damping * cfg.damping_down, 1e-12);
        if (++accepted % 50 == 0) rot = rot.renormalized();
        stepped = true;
        if (drop < cfg.epsilon) result.converged = true;
        break;
      }
      if (std::isfinite(cand_cost) &&
          std::abs(cand_cost - cost) / std::max(cost, 1e-300) < cfg.epsilon) {
        result.converged = true;
        break;
      }
      damping *= cfg.damping_up;
    }
    if (!stepped && !result.converged) break;
    if (result.converged) break;
  }

  result.rotation = rot.renormalized();
  result.t_dir = t;
  return result;
}

}  // namespace rotonly
