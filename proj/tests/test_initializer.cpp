#include "rsvo/initializer.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

using namespace rsvo;

using test::direction_angle_deg;
using test::rotation_angle_deg;

TEST(NormalizePoints, ConditionedSetIsFixedPoint) {
  // Four points already at zero centroid with RMS radius sqrt(2).
  std::vector<ImagePoint> pts = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  // RMS = sqrt(2) exactly.
  const auto [out, t] = normalize_points(pts);
  EXPECT_LT((t - Mat3::Identity()).norm(), 1e-12);
  for (size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(out[i].c, pts[i].c, 1e-12);
    EXPECT_NEAR(out[i].r, pts[i].r, 1e-12);
  }
}

TEST(NormalizePoints, HandComputedSquare) {
  const std::vector<ImagePoint> pts = {{0, 0}, {2, 0}, {0, 2}, {2, 2}};
  const auto [out, t] = normalize_points(pts);
  // Centroid (1,1); every point at distance sqrt(2) so RMS = sqrt(2), scale 1.
  EXPECT_NEAR(out[0].c, -1, 1e-12);
  EXPECT_NEAR(out[0].r, -1, 1e-12);
  EXPECT_NEAR(out[3].c, 1, 1e-12);
  EXPECT_NEAR(out[3].r, 1, 1e-12);

  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  double sum_sq = 0;
  for (const auto& p : out) {
    centroid += Eigen::Vector2d(p.c, p.r);
    sum_sq += p.c * p.c + p.r * p.r;
  }
  EXPECT_LT(centroid.norm() / pts.size(), 1e-12);
  EXPECT_NEAR(std::sqrt(sum_sq / pts.size()), std::sqrt(2.0), 1e-12);
}

TEST(NormalizePoints, TransformReproducesOutputs) {
  Rng rng(30);
  std::vector<ImagePoint> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(0, 1280), rng.uniform(0, 720)});
  const auto [out, t] = normalize_points(pts);
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3 mapped = t * Vec3(pts[i].c, pts[i].r, 1.0);
    EXPECT_NEAR(mapped.x() / mapped.z(), out[i].c, 1e-12);
    EXPECT_NEAR(mapped.y() / mapped.z(), out[i].r, 1e-12);
  }
}

TEST(NormalizePoints, DegenerateCloudThrows) {
  const std::vector<ImagePoint> pts = {{5, 5}, {5, 5}, {5, 5}};
  EXPECT_THROW(normalize_points(pts), DegenerateCloud);
}

TEST(EightPoint, RecoversEssentialOnCleanData) {
  const auto k = test::default_intrinsics();
  Rng rng(31);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 50, rng);
  ASSERT_EQ(corrs.size(), 50u);

  const NominalState st = sc.state();
  const Mat3 expected = gs_essential(st.rotation(), st.t_gs).e.normalized();
  Mat3 got = eight_point_essential(corrs, k).e.normalized();
  if ((got + expected).norm() < (got - expected).norm()) got = -got;
  EXPECT_LT((got - expected).norm(), 1e-8);
}

TEST(EightPoint, OrderInvariant) {
  const auto k = test::default_intrinsics();
  Rng rng(32);
  const auto sc = test::make_scene(rng);
  auto corrs = test::synthesize_correspondences(sc, k, 30, rng);
  Mat3 a = eight_point_essential(corrs, k).e.normalized();
  std::reverse(corrs.begin(), corrs.end());
  std::swap(corrs[3], corrs[11]);
  Mat3 b = eight_point_essential(corrs, k).e.normalized();
  if ((a + b).norm() < (a - b).norm()) b = -b;
  EXPECT_LT((a - b).norm(), 1e-10);
}

TEST(EightPoint, ResidualsVanishOnCleanData) {
  const auto k = test::default_intrinsics();
  const Mat3 k_inv = k.inverse_matrix();
  Rng rng(33);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 40, rng);
  const Mat3 e = eight_point_essential(corrs, k).e.normalized();
  for (const auto& c : corrs) {
    const Vec3 xp = k_inv * detail::homogeneous(c.prev);
    const Vec3 xc = k_inv * detail::homogeneous(c.cur);
    EXPECT_LT(std::abs(xc.dot(e * xp)), 1e-10);
  }
}

TEST(EightPoint, TooFewPointsThrows) {
  const auto k = test::default_intrinsics();
  Rng rng(34);
  const auto sc = test::make_scene(rng);
  auto corrs = test::synthesize_correspondences(sc, k, 7, rng);
  EXPECT_THROW(eight_point_essential(corrs, k), TooFewPoints);
}

TEST(EightPoint, RankDeficientDesignThrows) {
  const auto k = test::default_intrinsics();
  // All correspondences identical: the design matrix has rank 1.
  std::vector<Correspondence> corrs(10, Correspondence{{100, 100}, {105, 102}});
  EXPECT_THROW(eight_point_essential(corrs, k), Error);
}

TEST(DecomposeEssential, RecoversPoseOnCleanData) {
  const auto k = test::default_intrinsics();
  Rng rng(35);
  for (int rep = 0; rep < 10; ++rep) {
    const auto sc = test::make_scene(rng);
    const auto corrs = test::synthesize_correspondences(sc, k, 20, rng);
    ASSERT_EQ(corrs.size(), 20u);
    const NominalState st = sc.state();
    const EssentialMatrix e = gs_essential(st.rotation(), st.t_gs);

    const Initialization init = decompose_essential(e, corrs, k);
    EXPECT_LT(rotation_angle_deg(init.pose.q.to_rotation_matrix(), st.rotation()), 1e-6);
    EXPECT_LT(direction_angle_deg(init.pose.t, st.t_gs), 1e-6);
  }
}

TEST(DecomposeEssential, SignAmbiguityResolvedByCheirality) {
  const auto k = test::default_intrinsics();
  Rng rng(36);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 20, rng);
  const NominalState st = sc.state();
  const EssentialMatrix e = gs_essential(st.rotation(), st.t_gs);
  const EssentialMatrix neg{Mat3(-e.e)};

  const Initialization a = decompose_essential(e, corrs, k);
  const Initialization b = decompose_essential(neg, corrs, k);
  EXPECT_LT(rotation_angle_deg(a.pose.q.to_rotation_matrix(), b.pose.q.to_rotation_matrix()), 1e-9);
  EXPECT_LT(direction_angle_deg(a.pose.t, b.pose.t), 1e-9);
}

TEST(DecomposeEssential, PureRotationFails) {
  const auto k = test::default_intrinsics();
  Rng rng(37);
  test::TwoFrameScene sc;
  sc.pose_prev = RigidTransform::identity();
  sc.pose_cur.rotation = test::random_rotation(rng, 0.02);
  sc.pose_cur.translation = Vec3::Zero();
  const auto corrs = test::synthesize_correspondences(sc, k, 20, rng);
  // Upstream gs_essential already rejects the zero translation.
  EXPECT_THROW(gs_essential(sc.state().rotation(), sc.state().t_gs), DegenerateTranslation);
  // An eight-point solve on pure-rotation data has no unique rank-2 solution;
  // whatever it returns must fail cheirality or rank checks downstream.
  try {
    const EssentialMatrix e = eight_point_essential(corrs, k);
    const Initialization init = decompose_essential(e, corrs, k);
    // If decomposition "succeeds", the data cannot pin the direction: flag it.
    EXPECT_TRUE(init.low_parallax);
  } catch (const Error&) {
    SUCCEED();
  }
}

TEST(Initializer, RoundTripEssential) {
  const auto k = test::default_intrinsics();
  Rng rng(38);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 40, rng);
  const NominalState st = sc.state();
  const Mat3 e_in = gs_essential(st.rotation(), st.t_gs).e.normalized();
  const Initialization init = decompose_essential({e_in}, corrs, k);
  Mat3 e_out = gs_essential(init.pose.q.to_rotation_matrix(), init.pose.t).e.normalized();
  if ((e_out + e_in).norm() < (e_out - e_in).norm()) e_out = -e_out;
  EXPECT_LT((e_out - e_in).norm(), 1e-6);
}

TEST(Initializer, ConditioningInvariance) {
  const auto k = test::default_intrinsics();
  Rng rng(39);
  const auto sc = test::make_scene(rng);
  auto corrs = test::synthesize_correspondences(sc, k, 40, rng);
  Mat3 a = eight_point_essential(corrs, k).e.normalized();

  // Uniform pixel translation of every input point. Removing intrinsics maps
  // it to a shifted normalized frame; conditioning must absorb it.
  auto shifted = corrs;
  for (auto& c : shifted) {
    c.prev.c += 17.0;
    c.prev.r += 17.0;
    c.cur.c += 17.0;
    c.cur.r += 17.0;
  }
  // The same shift applied through modified principal point keeps geometry.
  auto k2 = k;
  k2.cx += 17.0;
  k2.cy += 17.0;
  Mat3 b = eight_point_essential(shifted, k2).e.normalized();
  if ((a + b).norm() < (a - b).norm()) b = -b;
  EXPECT_LT((a - b).norm(), 1e-8);
}

TEST(Initializer, FullPipelineOnCleanData) {
  const auto k = test::default_intrinsics();
  Rng rng(40);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 60, rng);
  const Initialization init = estimate_initial_pose(corrs, k);
  const NominalState st = sc.state();
  EXPECT_LT(rotation_angle_deg(init.pose.q.to_rotation_matrix(), st.rotation()), 1e-5);
  EXPECT_LT(direction_angle_deg(init.pose.t, st.t_gs), 1e-5);
  EXPECT_FALSE(init.low_parallax);
}
