// Analytic recovery of the relative-translation direction from a matched
// pair: accumulate the simplified joint observation matrix P^S (the sum of
// epipolar-normal outer products), solve its minimum eigenpair in closed form
// (trigonometric Cardano + adjugate cross products), and classify the scene
// by the rank of P^S.
#pragma once

#include <array>
#include <optional>

#include "rotonly/geometry.hpp"

namespace rotonly {

enum class RankClass { Rank0, Rank1, Rank2 };

// 3x3 symmetric PSD summary of a matched pair. trace == sum of squared
// epipolar-normal norms, which doubles as the natural scale for tolerances.
struct ObservationSummary {
  Mat3 ps = Mat3::Zero();
  int m = 0;       // matched point count
  double trace = 0.0;
};

struct TranslationSolution {
  // Unit direction of the relative translation, absent when the null space
  // of P^S has dimension >= 2 (pure rotation / holoplane geometry).
  std::optional<Vec3> direction;
  double lambda_min = 0.0;
  RankClass rank_class = RankClass::Rank0;
  std::array<double, 3> xi_norms = {0.0, 0.0, 0.0};
};

// Per-point rank-1 PSD contribution theta * theta^T.
Mat3 point_matrix(const Rotation& r_ij, const Observation& x_i,
                  const Observation& x_j);

// P^S as M M^T where M stacks the epipolar-normal columns; identical to the
// sum of the per-point matrices.
ObservationSummary accumulate_ps(const MatchedPair& pair, const Rotation& r_ij);

// All three eigenvalues of a symmetric 3x3 matrix, ascending, via the
// characteristic polynomial and the trigonometric Cardano roots. Throws
// std::runtime_error on internal inconsistency (arccos argument beyond
// 1 + 1e-9, or positive depressed-cubic p beyond rounding slack).
std::array<double, 3> sym3_eigenvalues_cardano(const Mat3& sym);

double lambda_min_cardano(const ObservationSummary& s);

// Null-direction extraction from the rows of (P^S - lambda_min I). The three
// candidate cross products are formed, the largest is normalized, and its
// sign is canonicalized (first component of magnitude > 1e-12 positive).
TranslationSolution min_eigenvector_xi(const ObservationSummary& s,
                                       double lambda_min);

// Rank of P^S from eigenvalue counting at threshold 1e-8 * max(trace, 1e-14).
RankClass rank_classify(const ObservationSummary& s);

// lambda_min_cardano followed by min_eigenvector_xi.
TranslationSolution solve_translation(const ObservationSummary& s);

}  // namespace rotonly
