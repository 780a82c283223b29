#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rotonly/simulate.hpp"
#include "test_util.hpp"

using namespace rotonly;

TEST_CASE("generation determinism and validity") {
  SceneSpec spec;
  spec.kind = SceneKind::Standard;
  spec.n_points = 80;
  spec.noise_max_px = 3.0;
  spec.seed = 123;

  const GeneratedScene a = generate(spec);
  const GeneratedScene b = generate(spec);
  REQUIRE(a.points_world.size() == b.points_world.size());
  for (size_t i = 0; i < a.points_world.size(); ++i) {
    CHECK((a.points_world[i] - b.points_world[i]).norm() == 0.0);
  }
  for (size_t i = 0; i < a.poses.size(); ++i) {
    CHECK((a.poses[i].rotation.matrix() - b.poses[i].rotation.matrix())
              .norm() == 0.0);
    CHECK((a.poses[i].translation - b.poses[i].translation).norm() == 0.0);
  }
  for (size_t t = 0; t < a.noisy_graph.tracks.size(); ++t) {
    for (size_t o = 0; o < a.noisy_graph.tracks[t].observations.size(); ++o) {
      CHECK(a.noisy_graph.tracks[t].observations[o].obs.x ==
            b.noisy_graph.tracks[t].observations[o].obs.x);
    }
  }

  // chirality and image bounds on the clean graph
  const double bound = (spec.image_px / 2.0) / spec.focal_px;
  for (const Track& track : a.graph.tracks) {
    REQUIRE(track.gt_point.has_value());
    for (const TrackObservation& to : track.observations) {
      const int idx = a.graph.camera_index(to.view);
      const Vec3 cam = a.poses[idx].rotation.matrix() *
                       (*track.gt_point - a.poses[idx].translation);
      CHECK(cam.z() > 0.0);
      CHECK(std::abs(to.obs.x) <= bound + 1e-12);
      CHECK(std::abs(to.obs.y) <= bound + 1e-12);
    }
  }
}

TEST_CASE("scene structure construction properties") {
  SUBCASE("pure rotation puts both cameras at one center") {
    SceneSpec spec;
    spec.kind = SceneKind::PureRotation;
    spec.n_points = 50;
    spec.seed = 9;
    const GeneratedScene scene = generate(spec);
    CHECK((scene.poses[0].translation - scene.poses[1].translation).norm() ==
          0.0);
    const Rotation r_gt =
        relative_pose(scene.poses[0], scene.poses[1]).first;
    for (const PointMatch& pm : scene.graph.edges[0].points) {
      CHECK(epipolar_normal(r_gt, pm.left, pm.right).norm() < 1e-12);
    }
  }

  SUBCASE("holoplane points are coplanar with both camera centers") {
    SceneSpec spec;
    spec.kind = SceneKind::Holoplane;
    spec.n_points = 60;
    spec.seed = 10;
    const GeneratedScene scene = generate(spec);
    const Vec3 c0 = scene.poses[0].translation;  // origin
    const Vec3 c1 = scene.poses[1].translation;
    const Vec3 anchor(0, 0, 1);
    const Vec3 normal = (c1 - c0).cross(anchor - c0).normalized();
    for (const Vec3& p : scene.points_world) {
      CHECK(std::abs((p - c0).dot(normal)) < 1e-9);
    }
  }

  SUBCASE("line points are collinear on the requested plane") {
    SceneSpec spec;
    spec.kind = SceneKind::RankRegularLine;
    spec.n_points = 40;
    spec.seed = 11;
    const GeneratedScene scene = generate(spec);
    const Vec3 d =
        (scene.points_world[1] - scene.points_world[0]).normalized();
    for (const Vec3& p : scene.points_world) {
      CHECK(p.z() == doctest::Approx(10.0).epsilon(1e-12));
      const Vec3 rel = p - scene.points_world[0];
      CHECK((rel - rel.dot(d) * d).norm() < 1e-9);
    }
  }

  SUBCASE("two-view kinds refuse other camera counts") {
    SceneSpec spec;
    spec.kind = SceneKind::PureRotation;
    spec.n_cameras = 3;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  }

  SUBCASE("multi-view scenes are connected with shared tracks") {
    SceneSpec spec;
    spec.kind = SceneKind::OutwardLooking;
    spec.n_cameras = 8;
    spec.n_points = 150;
    spec.seed = 12;
    const GeneratedScene scene = generate(spec);
    CHECK(scene.graph.edges.size() >= scene.poses.size() - 1);
    for (const Track& track : scene.graph.tracks) {
      CHECK(track.observations.size() >= 2);
    }
    // reachability over edges
    std::set<int> reached = {0};
    bool grew = true;
    while (grew) {
      grew = false;
      for (const MatchedPair& e : scene.graph.edges) {
        if (reached.count(e.left_view) != reached.count(e.right_view)) {
          reached.insert(e.left_view);
          reached.insert(e.right_view);
          grew = true;
        }
      }
    }
    CHECK(reached.size() == scene.poses.size());
  }
}

TEST_CASE("add_noise statistics and determinism") {
  SceneSpec spec;
  spec.kind = SceneKind::Standard;
  spec.n_points = 2000;
  spec.focal_px = 800.0;
  spec.image_px = 1600;
  spec.seed = 77;
  const GeneratedScene scene = generate(spec);

  SUBCASE("zero noise is the identity") {
    const GeneratedScene same = add_noise(scene, 0.0, 5);
    for (size_t t = 0; t < scene.graph.tracks.size(); ++t) {
      for (size_t o = 0; o < scene.graph.tracks[t].observations.size(); ++o) {
        CHECK(same.noisy_graph.tracks[t].observations[o].obs.x ==
              scene.graph.tracks[t].observations[o].obs.x);
      }
    }
  }

  SUBCASE("mean pixel displacement of U(0,5) is 2.5") {
    const GeneratedScene noisy = add_noise(scene, 5.0, 6);
    double total = 0.0;
    int count = 0;
    for (size_t t = 0; t < scene.graph.tracks.size(); ++t) {
      for (size_t o = 0; o < scene.graph.tracks[t].observations.size(); ++o) {
        const Observation& clean = scene.graph.tracks[t].observations[o].obs;
        const Observation& pert =
            noisy.noisy_graph.tracks[t].observations[o].obs;
        total += std::hypot(pert.x - clean.x, pert.y - clean.y) *
                 spec.focal_px;
        ++count;
      }
    }
    CHECK(count >= 4000);
    CHECK(total / count == doctest::Approx(2.5).epsilon(0.04));
  }

  SUBCASE("same seed gives identical noise, edges match tracks") {
    const GeneratedScene n1 = add_noise(scene, 4.0, 8);
    const GeneratedScene n2 = add_noise(scene, 4.0, 8);
    const MatchedPair& e1 = n1.noisy_graph.edges[0];
    const MatchedPair& e2 = n2.noisy_graph.edges[0];
    for (size_t k = 0; k < e1.points.size(); ++k) {
      CHECK(e1.points[k].left.x == e2.points[k].left.x);
      CHECK(e1.points[k].right.y == e2.points[k].right.y);
    }
    // the edge copies see the same offsets as the track copies
    for (const PointMatch& pm : e1.points) {
      const Track& track = n1.noisy_graph.tracks[pm.track];
      for (const TrackObservation& to : track.observations) {
        if (to.view == e1.left_view) {
          CHECK(to.obs.x == pm.left.x);
          CHECK(to.obs.y == pm.left.y);
        }
      }
    }
  }
}

TEST_CASE("perturb_rotation") {
  CounterRng rng(81);
  const Rotation base = testing::random_rotation(rng);
  CHECK((perturb_rotation(base, 0.0, 3).matrix() - base.matrix()).norm() ==
        0.0);
  for (int i = 0; i < 100; ++i) {
    CHECK(rotation_error(base, perturb_rotation(base, 0.2, i)) ==
          doctest::Approx(0.2).epsilon(1e-12));
  }

  // axis uniformity: chi-square over octants at p > 0.01 (df=7 -> 18.48)
  std::array<int, 8> counts{};
  const int samples = 8000;
  for (int i = 0; i < samples; ++i) {
    const Rotation r = perturb_rotation(Rotation(), 0.3, 10000 + i);
    const Vec3 axis = log_so3(r).normalized();
    const int octant = (axis.x() > 0) + 2 * (axis.y() > 0) +
                       4 * (axis.z() > 0);
    ++counts[octant];
  }
  double chi2 = 0.0;
  for (int c : counts) {
    const double expected = samples / 8.0;
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < 18.48);
}

TEST_CASE("jacobi_eigen") {
  {
    Mat3 d = Mat3::Zero();
    d.diagonal() << 3.0, 1.0, 2.0;
    const EigenDecomposition eig = jacobi_eigen(d);
    CHECK(eig.values[0] == doctest::Approx(1.0));
    CHECK(eig.values[1] == doctest::Approx(2.0));
    CHECK(eig.values[2] == doctest::Approx(3.0));
    CHECK(std::abs(eig.vectors.col(0).dot(Vec3::UnitY())) ==
          doctest::Approx(1.0));
  }
  {
    const Vec3 theta(0.4, -1.2, 0.3);
    const EigenDecomposition eig = jacobi_eigen(theta * theta.transpose());
    CHECK(std::abs(eig.values[0]) < 1e-14);
    CHECK(std::abs(eig.values[1]) < 1e-14);
    CHECK(eig.values[2] == doctest::Approx(theta.squaredNorm()));
  }

  CounterRng rng(82);
  for (int i = 0; i < 300; ++i) {
    Mat3 b;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) b(r, c) = rng.uniform(-1.0, 1.0);
    }
    const Mat3 psd = b * b.transpose();
    const EigenDecomposition eig = jacobi_eigen(psd);
    Mat3 lambda = Mat3::Zero();
    lambda.diagonal() << eig.values[0], eig.values[1], eig.values[2];
    CHECK((eig.vectors * lambda * eig.vectors.transpose() - psd).norm() <
          1e-12 * std::max(1.0, psd.norm()));
    CHECK((eig.vectors.transpose() * eig.vectors - Mat3::Identity()).norm() <
          1e-12);
  }

  Mat3 asym = Mat3::Zero();
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(jacobi_eigen(asym), std::invalid_argument);
}

TEST_CASE("triangulate_midpoint") {
  SUBCASE("recovers noise-free points") {
    SceneSpec spec;
    spec.kind = SceneKind::Standard;
    spec.n_points = 20;
    spec.seed = 83;
    const GeneratedScene scene = generate(spec);
    for (const Track& track : scene.graph.tracks) {
      std::vector<CameraPose> poses;
      std::vector<Observation> obs;
      for (const TrackObservation& to : track.observations) {
        poses.push_back(scene.poses[scene.graph.camera_index(to.view)]);
        obs.push_back(to.obs);
      }
      const auto point = triangulate_midpoint(poses, obs);
      REQUIRE(point.has_value());
      CHECK((*point - *track.gt_point).norm() <
            1e-10 * std::max(1.0, track.gt_point->norm()));
    }
  }

  SUBCASE("parallel rays are degenerate") {
    std::vector<CameraPose> poses(2);  // same center, same ray
    std::vector<Observation> obs = {{0.1, 0.2}, {0.1, 0.2}};
    CHECK_FALSE(triangulate_midpoint(poses, obs).has_value());
  }

  SUBCASE("noisy multi-view residual stays within the noise bound") {
    SceneSpec spec;
    spec.kind = SceneKind::Circular;
    spec.n_cameras = 5;
    spec.n_points = 30;
    spec.noise_max_px = 2.0;
    spec.seed = 84;
    const GeneratedScene scene = generate(spec);
    const double bound_norm = 4.0 * spec.noise_max_px / spec.focal_px;
    for (const Track& track : scene.noisy_graph.tracks) {
      std::vector<CameraPose> poses;
      std::vector<Observation> obs;
      for (const TrackObservation& to : track.observations) {
        poses.push_back(scene.poses[scene.graph.camera_index(to.view)]);
        obs.push_back(to.obs);
      }
      const auto point = triangulate_midpoint(poses, obs);
      if (!point) continue;
      for (size_t i = 0; i < poses.size(); ++i) {
        const Projection reproj = project(poses[i], *point);
        CHECK(std::hypot(reproj.obs.x - obs[i].x, reproj.obs.y - obs[i].y) <
              bound_norm);
      }
    }
  }
}

TEST_CASE("monte_carlo determinism and structure") {
  RunSpec rs;
  rs.scenes = {SceneKind::Standard};
  rs.noise_levels_px = {0.0, 2.0};
  rs.trials = 4;
  rs.base.n_points = 60;
  rs.master_seed = 99;
  rs.perturb_angle = 0.05;

  const std::vector<TrialRow> rows = monte_carlo(rs);
  CHECK(rows.size() == 2 * 4 * 3);  // noise x trials x methods

  SUBCASE("single-trial reproducibility") {
    RunSpec one = rs;
    one.trials = 1;
    one.noise_levels_px = {0.0};
    const std::vector<TrialRow> single = monte_carlo(one);
    for (const TrialRow& row : single) {
      for (const TrialRow& full : rows) {
        if (full.trial == 0 && full.noise_max_px == 0.0 &&
            full.method == row.method) {
          CHECK(full.error_rad == row.error_rad);
        }
      }
    }
  }

  SUBCASE("method order does not change per-method results") {
    RunSpec swapped = rs;
    swapped.methods = {"pa", "init", "trrm"};
    const std::vector<TrialRow> rows2 = monte_carlo(swapped);
    REQUIRE(rows2.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].method == rows2[i].method);
      CHECK(rows[i].error_rad == rows2[i].error_rad);
    }
  }

  SUBCASE("thread count does not change the table") {
    RunSpec threaded = rs;
    threaded.threads = 4;
    const std::vector<TrialRow> rows4 = monte_carlo(threaded);
    REQUIRE(rows4.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].error_rad == rows4[i].error_rad);
      CHECK(rows[i].iterations == rows4[i].iterations);
    }
  }

  SUBCASE("aggregates match a manual fold") {
    const std::vector<AggregateRow> aggs = aggregate(rows);
    for (const AggregateRow& agg : aggs) {
      CHECK(agg.n_ok == 4);
      CHECK(agg.n_failed == 0);
    }
  }

  SUBCASE("optimization beats the perturbed initialization under noise") {
    RunSpec bigger = rs;
    bigger.trials = 30;
    bigger.noise_levels_px = {5.0};
    bigger.base.n_points = 200;
    const std::vector<TrialRow> res = monte_carlo(bigger);
    int wins = 0, n = 0;
    std::map<int, double> init_err, trrm_err;
    for (const TrialRow& row : res) {
      if (row.method == "init") init_err[row.trial] = row.error_rad;
      if (row.method == "trrm") trrm_err[row.trial] = row.error_rad;
    }
    for (const auto& [trial, err] : trrm_err) {
      ++n;
      if (err < init_err[trial]) ++wins;
    }
    CHECK(testing::sign_test_p(wins, n) < 0.01);
  }
}
