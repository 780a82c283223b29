// Shared helpers for the test suites: seeded random geometry, synthetic
// correspondences with known ground truth, and small statistics utilities.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "rotonly/geometry.hpp"
#include "rotonly/rng.hpp"

namespace rotonly::testing {

inline Rotation random_rotation(CounterRng& rng, double max_angle = 3.0) {
  return exp_so3(rng.uniform(0.0, max_angle) * rng.unit_vector());
}

inline Observation random_observation(CounterRng& rng, double bound = 1.0) {
  return {rng.uniform(-bound, bound), rng.uniform(-bound, bound)};
}

struct SyntheticPair {
  CameraPose pose_i;
  CameraPose pose_j;
  Rotation r_ij;
  Vec3 t_ij;  // full relative translation, camera-j frame
  MatchedPair pair;
};

// Random two-camera geometry with points visible in both views; every
// correspondence is exact (noise-free) and chirality-consistent.
inline SyntheticPair synthetic_pair(CounterRng& rng, int n_points,
                                    bool pure_rotation = false) {
  SyntheticPair out;
  out.pose_i.rotation = random_rotation(rng, 0.4);
  out.pose_i.translation = rng.in_ball(1.0);
  out.pose_j.rotation =
      Rotation(random_rotation(rng, 0.4).matrix() * out.pose_i.rotation.matrix());
  out.pose_j.translation =
      pure_rotation ? out.pose_i.translation
                    : out.pose_i.translation + rng.in_ball(2.0);
  const auto rel = relative_pose(out.pose_i, out.pose_j);
  out.r_ij = rel.first;
  out.t_ij = rel.second;

  out.pair.left_view = 0;
  out.pair.right_view = 1;
  while (static_cast<int>(out.pair.points.size()) < n_points) {
    // Sample in front of camera i and keep only points also seen by j.
    const Observation oi = random_observation(rng, 0.9);
    const double depth = rng.uniform(4.0, 30.0);
    const Vec3 world = out.pose_i.rotation.matrix().transpose() *
                           (depth * oi.hom()) +
                       out.pose_i.translation;
    const Vec3 cam_j =
        out.pose_j.rotation.matrix() * (world - out.pose_j.translation);
    if (cam_j.z() < 0.5) continue;
    const Observation oj{cam_j.x() / cam_j.z(), cam_j.y() / cam_j.z()};
    if (std::abs(oj.x) > 1.2 || std::abs(oj.y) > 1.2) continue;
    out.pair.points.push_back(
        {oi, oj, static_cast<TrackId>(out.pair.points.size())});
  }
  return out;
}

inline double spearman(const std::vector<double>& xs,
                       const std::vector<double>& ys) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  const std::vector<double> rx = ranks(xs);
  const std::vector<double> ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mean = (n - 1.0) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  return num / std::sqrt(dx * dy);
}

// One-sided sign test: probability of >= wins successes among n fair coin
// flips. Small result means "wins" is significantly more than half.
inline double sign_test_p(int wins, int n) {
  // log-space binomial tail to stay finite for n in the hundreds
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double log_term = -n * std::log(2.0);
    for (int i = 0; i < k; ++i) {
      log_term += std::log(static_cast<double>(n - i)) -
                  std::log(static_cast<double>(i + 1));
    }
    p += std::exp(log_term);
  }
  return std::min(1.0, p);
}

}  // namespace rotonly::testing
