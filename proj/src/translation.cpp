#include "rotonly/translation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace rotonly {

namespace {

constexpr double kRankTolRel = 1e-8;
constexpr double kRankTolAbsFloor = 1e-14;
constexpr double kXiTolRel = 1e-12;  // xi norms are quadratic in P^S

// Sum of the principal 2x2 minors == trace of the adjugate.
double trace_adjugate(const Mat3& a) {
  const double m0 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  const double m1 = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  const double m2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  return m0 + m1 + m2;
}

Vec3 canonical_sign(const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > 1e-12) return v[i] > 0.0 ? v : -v;
  }
  return v;
}

}  // namespace

Mat3 point_matrix(const Rotation& r_ij, const Observation& x_i,
                  const Observation& x_j) {
  const Vec3 theta = epipolar_normal(r_ij, x_i, x_j);
  return theta * theta.transpose();
}

ObservationSummary accumulate_ps(const MatchedPair& pair,
                                 const Rotation& r_ij) {
  const int m = static_cast<int>(pair.points.size());
  Eigen::Matrix<double, 3, Eigen::Dynamic> stacked(3, m);
  for (int k = 0; k < m; ++k) {
    stacked.col(k) =
        epipolar_normal(r_ij, pair.points[k].left, pair.points[k].right);
  }
  Mat3 ps = stacked * stacked.transpose();
  ps = 0.5 * (ps + ps.transpose().eval());
  return {ps, m, ps.trace()};
}

std::array<double, 3> sym3_eigenvalues_cardano(const Mat3& a) {
  const double tr = a.trace();
  const double tr_adj = trace_adjugate(a);
  const double det = a.determinant();

  // Depressed cubic y^3 + p y + q for lambda = y + tr/3.
  const double p = tr_adj - tr * tr / 3.0;
  const double q = -det + tr * tr_adj / 3.0 - 2.0 * tr * tr * tr / 27.0;

  const double scale2 = std::max(tr * tr, a.squaredNorm());
  if (std::abs(p) < 1e-14 * std::max(scale2, 1e-300)) {
    // Triple (or numerically indistinguishable) root.
    const double lam = tr / 3.0;
    return {lam, lam, lam};
  }
  if (p > 0.0) {
    throw std::runtime_error(
        "sym3_eigenvalues_cardano: positive depressed-cubic coefficient; "
        "input is not numerically symmetric");
  }

  double x = 0.5 * q * std::sqrt(-27.0 / (p * p * p));
  if (std::abs(x) > 1.0) {
    if (std::abs(x) > 1.0 + 1e-9) {
      throw std::runtime_error(
          "sym3_eigenvalues_cardano: arccos argument out of range");
    }
    x = x > 0.0 ? 1.0 : -1.0;
  }
  const double phi = std::acos(x);
  const double s = std::sqrt(-p / 3.0);

  std::array<double, 3> lam;
  for (int k = 0; k < 3; ++k) {
    lam[k] = tr / 3.0 - 2.0 * s * std::cos((phi + 2.0 * M_PI * k) / 3.0);
  }
  std::sort(lam.begin(), lam.end());
  return lam;
}

double lambda_min_cardano(const ObservationSummary& s) {
  return sym3_eigenvalues_cardano(s.ps)[0];
}

TranslationSolution min_eigenvector_xi(const ObservationSummary& s,
                                       double lambda_min) {
  TranslationSolution sol;
  sol.lambda_min = lambda_min;
  sol.rank_class = rank_classify(s);

  const Mat3 b = s.ps - lambda_min * Mat3::Identity();
  const Vec3 r0 = b.row(0), r1 = b.row(1), r2 = b.row(2);
  const std::array<Vec3, 3> xi = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  for (int i = 0; i < 3; ++i) sol.xi_norms[i] = xi[i].norm();

  const double threshold = kXiTolRel * s.trace * s.trace;
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    // Ties within 1e-12 relative keep the lower index.
    if (sol.xi_norms[i] > sol.xi_norms[best] * (1.0 + 1e-12)) best = i;
  }
  if (sol.xi_norms[best] > threshold) {
    sol.direction = canonical_sign(xi[best].normalized());
  }
  return sol;
}

RankClass rank_classify(const ObservationSummary& s) {
  const std::array<double, 3> lam = sym3_eigenvalues_cardano(s.ps);
  const double threshold = kRankTolRel * std::max(s.trace, kRankTolAbsFloor);
  int count = 0;
  for (double l : lam) {
    if (l > threshold) ++count;
  }
  if (count == 0) return RankClass::Rank0;
  if (count == 1) return RankClass::Rank1;
  return RankClass::Rank2;
}

TranslationSolution solve_translation(const ObservationSummary& s) {
  return min_eigenvector_xi(s, lambda_min_cardano(s));
}

}  // namespace rotonly
