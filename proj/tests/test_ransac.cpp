#include "rsvo/ransac.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace rsvo;

namespace {

std::vector<Correspondence> noisy(std::vector<Correspondence> corrs, double sigma, Rng& rng) {
  for (auto& c : corrs) {
    c.prev.c += rng.gaussian(sigma);
    c.prev.r += rng.gaussian(sigma);
    c.cur.c += rng.gaussian(sigma);
    c.cur.r += rng.gaussian(sigma);
  }
  return corrs;
}

bool results_identical(const EstimationResult& a, const EstimationResult& b) {
  if (a.inlier_mask != b.inlier_mask) return false;
  if (a.per_point_residual != b.per_point_residual) return false;
  if (a.inlier_ratio != b.inlier_ratio) return false;
  if (a.best_iteration != b.best_iteration) return false;
  if ((a.state.rotation() - b.state.rotation()).cwiseAbs().maxCoeff() != 0.0) return false;
  if ((a.state.t_gs - b.state.t_gs).cwiseAbs().maxCoeff() != 0.0) return false;
  if ((a.state.motion_prev.w - b.state.motion_prev.w).cwiseAbs().maxCoeff() != 0.0) return false;
  if ((a.state.motion_cur.v - b.state.motion_cur.v).cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

}  // namespace

TEST(CountInliers, TrueStateOnCleanDataAllInliers) {
  const auto k = test::default_intrinsics();
  Rng rng(70);
  const auto sc = test::make_scene(rng, 30, 60);
  const auto corrs = test::synthesize_correspondences(sc, k, 50, rng);
  ASSERT_EQ(corrs.size(), 50u);
  const InlierStats stats = count_inliers(sc.gauge_state(), corrs, k, 1.0);
  EXPECT_EQ(stats.count, 50);
  for (double r : stats.residuals) EXPECT_LE(r, 1e-3);
}

TEST(CountInliers, TinyThresholdOnNoisyData) {
  const auto k = test::default_intrinsics();
  Rng rng(71);
  const auto sc = test::make_scene(rng, 10, 20);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 50, rng), 1.0, rng);
  const InlierStats stats = count_inliers(sc.gauge_state(), corrs, k, 1e-9);
  EXPECT_LE(stats.count, 1);
}

TEST(CountInliers, MonotoneInThreshold) {
  const auto k = test::default_intrinsics();
  Rng rng(72);
  const auto sc = test::make_scene(rng, 20, 40);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 60, rng), 1.0, rng);
  int prev_count = 0;
  for (double thr : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const int c = count_inliers(sc.gauge_state(), corrs, k, thr).count;
    EXPECT_GE(c, prev_count);
    prev_count = c;
  }
}

TEST(MrsvoEstimate, CleanZeroDistortion) {
  const auto k = test::default_intrinsics();
  Rng rng(73);
  const auto sc = test::make_scene(rng);  // level [0,0]
  const auto corrs = test::synthesize_correspondences(sc, k, 120, rng);
  ASSERT_EQ(corrs.size(), 120u);

  RansacConfig cfg;
  cfg.iterations = 60;  // clean data; full 500 adds nothing here
  cfg.rng_seed = 1;
  const EstimationResult res = mrsvo_estimate(corrs, k, cfg);

  EXPECT_DOUBLE_EQ(res.inlier_ratio, 1.0);
  const NominalState gt = sc.gauge_state();
  EXPECT_LT(test::rotation_angle_deg(res.state.rotation(), gt.rotation()), 1e-4);
  EXPECT_LT(test::direction_angle_deg(res.state.t_gs, gt.t_gs), 1e-4);
}

TEST(MrsvoEstimate, VelocitiesNearZeroOnGsData) {
  const auto k = test::default_intrinsics();
  Rng rng(74);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 100, rng);
  RansacConfig cfg;
  cfg.iterations = 40;
  cfg.rng_seed = 2;
  const EstimationResult res = mrsvo_estimate(corrs, k, cfg);

  const double readout = k.tau * k.n_rows;
  EXPECT_LT(res.state.motion_prev.w.norm() * readout, 1e-3);
  EXPECT_LT(res.state.motion_cur.w.norm() * readout, 1e-3);
  // Gauge scene depth: typical landmark depth over the unit baseline.
  const double gauge_depth = 20.0 / sc.state().t_gs.norm();
  EXPECT_LT(res.state.motion_prev.v.norm() * readout, 1e-3 * gauge_depth);
  EXPECT_LT(res.state.motion_cur.v.norm() * readout, 1e-3 * gauge_depth);
}

TEST(MrsvoEstimate, HighDistortionKeepsInliers) {
  const auto k = test::default_intrinsics();
  Rng rng(75);
  double ratio_sum = 0;
  int n = 0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto sc = test::make_scene(rng, 50, 100);  // level 6
    const auto corrs = test::synthesize_correspondences(sc, k, 150, rng);
    if (corrs.size() < 150) continue;
    RansacConfig cfg;
    cfg.iterations = 150;
    cfg.rng_seed = 3 + rep;
    try {
      const EstimationResult res = mrsvo_estimate(corrs, k, cfg);
      ratio_sum += res.inlier_ratio;
      ++n;
    } catch (const InitializationFailed&) {
    }
  }
  ASSERT_GE(n, 2);
  EXPECT_GE(ratio_sum / n, 0.90);
}

TEST(MrsvoEstimate, SeededDeterminism) {
  const auto k = test::default_intrinsics();
  Rng rng(76);
  const auto sc = test::make_scene(rng, 20, 40);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 80, rng), 0.5, rng);
  RansacConfig cfg;
  cfg.iterations = 30;
  cfg.rng_seed = 99;
  const EstimationResult a = mrsvo_estimate(corrs, k, cfg);
  const EstimationResult b = mrsvo_estimate(corrs, k, cfg);
  EXPECT_TRUE(results_identical(a, b));
}

TEST(MrsvoEstimate, NeverWorseThanHypothesisZero) {
  const auto k = test::default_intrinsics();
  Rng rng(77);
  for (int rep = 0; rep < 3; ++rep) {
    const auto sc = test::make_scene(rng, 30, 60);
    auto corrs = test::synthesize_correspondences(sc, k, 80, rng);
    if (corrs.size() < 80) continue;
    corrs = noisy(corrs, 0.5, rng);
    RansacConfig cfg;
    cfg.iterations = 25;
    cfg.rng_seed = rep;
    const EstimationResult res = mrsvo_estimate(corrs, k, cfg);

    const Initialization init = estimate_initial_pose(corrs, k);
    NominalState h0;
    h0.q_gs = init.pose.q;
    h0.t_gs = init.pose.t;
    const InlierStats s0 = count_inliers(h0, corrs, k, cfg.inlier_threshold);
    EXPECT_GE(res.inlier_count, s0.count);
  }
}

TEST(MrsvoEstimate, MoreIterationsNeverHurt) {
  const auto k = test::default_intrinsics();
  Rng rng(78);
  const auto sc = test::make_scene(rng, 40, 80);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 60, rng), 1.0, rng);
  RansacConfig cfg;
  cfg.rng_seed = 5;
  cfg.iterations = 40;
  const EstimationResult short_run = mrsvo_estimate(corrs, k, cfg);
  cfg.iterations = 80;
  const EstimationResult long_run = mrsvo_estimate(corrs, k, cfg);
  EXPECT_GE(long_run.inlier_count, short_run.inlier_count);
}

TEST(MrsvoEstimate, MaskResidualConsistency) {
  const auto k = test::default_intrinsics();
  Rng rng(79);
  const auto sc = test::make_scene(rng, 20, 40);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 70, rng), 1.0, rng);
  RansacConfig cfg;
  cfg.iterations = 25;
  cfg.rng_seed = 7;
  const EstimationResult res = mrsvo_estimate(corrs, k, cfg);
  ASSERT_EQ(res.inlier_mask.size(), corrs.size());
  int count = 0;
  for (size_t i = 0; i < corrs.size(); ++i) {
    if (res.inlier_mask[i]) {
      ++count;
      EXPECT_LE(res.per_point_residual[i], cfg.inlier_threshold);
    }
  }
  EXPECT_EQ(count, res.inlier_count);
  EXPECT_DOUBLE_EQ(res.inlier_ratio, static_cast<double>(count) / corrs.size());
  // Recompute from the returned state.
  const InlierStats check = count_inliers(res.state, corrs, k, cfg.inlier_threshold);
  EXPECT_EQ(check.count, res.inlier_count);
}

TEST(MrsvoEstimate, TooFewPointsThrows) {
  const auto k = test::default_intrinsics();
  Rng rng(80);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 15, rng);
  EXPECT_THROW(mrsvo_estimate(corrs, k), TooFewPoints);
}

TEST(MvoEstimate, CleanGsData) {
  const auto k = test::default_intrinsics();
  Rng rng(81);
  const auto sc = test::make_scene(rng);
  const auto corrs = test::synthesize_correspondences(sc, k, 100, rng);
  RansacConfig cfg;
  cfg.iterations = 50;
  cfg.rng_seed = 11;
  const EstimationResult res = mvo_estimate(corrs, k, cfg);
  EXPECT_DOUBLE_EQ(res.inlier_ratio, 1.0);
  const NominalState gt = sc.gauge_state();
  EXPECT_LT(test::rotation_angle_deg(res.state.rotation(), gt.rotation()), 1e-4);
  EXPECT_LT(res.state.motion_prev.w.norm() + res.state.motion_cur.v.norm(), 1e-15);
}

TEST(MvoEstimate, CollapsesUnderHighDistortion) {
  const auto k = test::default_intrinsics();
  Rng rng(82);
  const auto sc = test::make_scene(rng, 50, 100);
  const auto corrs = test::synthesize_correspondences(sc, k, 150, rng);
  ASSERT_EQ(corrs.size(), 150u);
  RansacConfig cfg;
  cfg.iterations = 150;
  cfg.rng_seed = 13;
  const EstimationResult mvo = mvo_estimate(corrs, k, cfg);
  const EstimationResult mrsvo = mrsvo_estimate(corrs, k, cfg);
  EXPECT_LT(mvo.inlier_ratio, 0.6 * mrsvo.inlier_ratio);
}

TEST(MvoEstimate, SeededDeterminism) {
  const auto k = test::default_intrinsics();
  Rng rng(83);
  const auto sc = test::make_scene(rng, 20, 40);
  const auto corrs = noisy(test::synthesize_correspondences(sc, k, 60, rng), 1.0, rng);
  RansacConfig cfg;
  cfg.iterations = 100;
  cfg.rng_seed = 17;
  EXPECT_TRUE(results_identical(mvo_estimate(corrs, k, cfg), mvo_estimate(corrs, k, cfg)));
}

TEST(MrsvoNoRansac, RefinesInitializationOnFullSet) {
  const auto k = test::default_intrinsics();
  Rng rng(84);
  const auto sc = test::make_scene(rng, 20, 40);
  const auto corrs = test::synthesize_correspondences(sc, k, 80, rng);
  ASSERT_EQ(corrs.size(), 80u);
  const EstimationResult res = mrsvo_noransac_estimate(corrs, k);
  const EstimationResult plain = mvo_plain_estimate(corrs, k);
  // The RS-aware single refinement must explain at least as much data as the
  // GS baseline it starts from.
  EXPECT_GE(res.inlier_count, plain.inlier_count);
  EXPECT_GT(res.lm_iterations, 0);
}
