// Degenerate-scene detection for a matched pair. Pairs whose observation
// Gram matrices are rank deficient (holoplane or collinear-points geometry)
// leave the translation direction unrecoverable and must be excluded before
// rotation optimization.
#pragma once

#include <utility>

#include "rotonly/geometry.hpp"

namespace rotonly {

enum class SceneLabel { PureRotationLike, RotationSingular, Regular };

const char* to_string(SceneLabel label);

struct DetectionReport {
  double g_i_lambda_min = 0.0;  // min eigenvalue of the left Gram matrix
  double g_j_lambda_min = 0.0;  // min eigenvalue of the right Gram matrix
  double v_rs = 0.0;            // max of the two, normalized by point count
  double theta_mean_sq = 0.0;   // trace(P^S) / m
  SceneLabel label = SceneLabel::Regular;
};

// Observation Gram matrices G^i = sum hom(x_i) hom(x_i)^T and likewise G^j.
std::pair<Mat3, Mat3> detection_matrices(const MatchedPair& pair);

// Detection score max(lambda_min(G^i), lambda_min(G^j)) / m. Values below
// ~1e-4 (normalized coordinates, ~90 degree field of view) indicate a
// rotation-singular pair; the score scales with focal^-2 when the thresholds
// are expressed in pixel coordinates.
double v_rs(const MatchedPair& pair);

// Pure-rotation-like pairs (mean squared epipolar-normal below threshold_pr)
// are identified first; otherwise the pair is RotationSingular when v_rs
// falls below threshold_rs, else Regular.
DetectionReport classify(const MatchedPair& pair, const Rotation& r_ij,
                         double threshold_rs = 1e-4,
                         double threshold_pr = 1e-9);

}  // namespace rotonly
