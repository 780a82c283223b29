#include "rotonly/detector.hpp"

#include <stdexcept>

#include "rotonly/translation.hpp"

namespace rotonly {

const char* to_string(SceneLabel label) {
  switch (label) {
    case SceneLabel::PureRotationLike:
      return "PureRotationLike";
    case SceneLabel::RotationSingular:
      return "RotationSingular";
    case SceneLabel::Regular:
      return "Regular";
  }
  return "Unknown";
}

std::pair<Mat3, Mat3> detection_matrices(const MatchedPair& pair) {
  if (pair.points.empty()) {
    throw std::invalid_argument("detection_matrices: empty pair");
  }
  Mat3 gi = Mat3::Zero();
  Mat3 gj = Mat3::Zero();
  for (const PointMatch& pm : pair.points) {
    const Vec3 xi = pm.left.hom();
    const Vec3 xj = pm.right.hom();
    gi.noalias() += xi * xi.transpose();
    gj.noalias() += xj * xj.transpose();
  }
  return {gi, gj};
}

double v_rs(const MatchedPair& pair) {
  const auto [gi, gj] = detection_matrices(pair);
  const double li = sym3_eigenvalues_cardano(gi)[0];
  const double lj = sym3_eigenvalues_cardano(gj)[0];
  return std::max(li, lj) / static_cast<double>(pair.points.size());
}

DetectionReport classify(const MatchedPair& pair, const Rotation& r_ij,
                         double threshold_rs, double threshold_pr) {
  if (threshold_rs <= 0.0 || threshold_pr <= 0.0) {
    throw std::invalid_argument("classify: thresholds must be positive");
  }
  DetectionReport report;
  const double m = static_cast<double>(pair.points.size());

  const auto [gi, gj] = detection_matrices(pair);
  report.g_i_lambda_min = sym3_eigenvalues_cardano(gi)[0];
  report.g_j_lambda_min = sym3_eigenvalues_cardano(gj)[0];
  report.v_rs = std::max(report.g_i_lambda_min, report.g_j_lambda_min) / m;

  const ObservationSummary summary = accumulate_ps(pair, r_ij);
  report.theta_mean_sq = summary.trace / m;

  if (report.theta_mean_sq < threshold_pr) {
    report.label = SceneLabel::PureRotationLike;
  } else if (report.v_rs < threshold_rs) {
    report.label = SceneLabel::RotationSingular;
  } else {
    report.label = SceneLabel::Regular;
  }
  return report;
}

}  // namespace rotonly
