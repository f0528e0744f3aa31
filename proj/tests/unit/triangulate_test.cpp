#include <gtest/gtest.h>

#include <random>

#include "../common/test_rigs.hpp"
#include "densewarp/triangulate.hpp"

namespace densewarp {
namespace {

using testing::circle_rig;

std::vector<Observation> exact(const Rig& rig, const Vec3& x) {
  std::vector<Observation> obs;
  for (const CameraView& cam : rig) obs.push_back({cam.id, project_point(cam, x), 1.0});
  return obs;
}

TEST(Dlt, NoiselessIsExact) {
  const Rig rig = circle_rig(4);
  const Vec3 x(0.3, -0.2, 4.1);
  EXPECT_LT((triangulate_dlt(exact(rig, x), rig) - x).norm(), 1e-9);
}

TEST(Dlt, RandomPointsRecovered) {
  const Rig rig = circle_rig(4);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = testing::random_volume_point(rng);
    EXPECT_LT((triangulate_dlt(exact(rig, x), rig) - x).norm(), 1e-9);
  }
}

TEST(Dlt, InsufficientViews) {
  const Rig rig = circle_rig(4);
  auto obs = exact(rig, Vec3(0, 0, 1));
  obs.resize(1);
  try {
    triangulate_dlt(obs, rig);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientViews);
  }
  auto zeroed = exact(rig, Vec3(0, 0, 1));
  for (std::size_t i = 1; i < zeroed.size(); ++i) zeroed[i].weight = 0.0;
  EXPECT_THROW(triangulate_dlt(zeroed, rig), Error);
}

TEST(Dlt, CoincidentCentres) {
  Rig rig = circle_rig(2);
  rig[1] = testing::look_at_camera(1, rig[0].center(), Vec3(0.2, 0.1, 1.0), 58.0, 32, 32);
  const Vec3 x(0.1, 0.0, 1.0);
  try {
    triangulate_dlt(exact(rig, x), rig);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(Dlt, ZeroWeightEqualsRemoval) {
  const Rig rig = circle_rig(4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.7);
  auto obs = exact(rig, Vec3(0.1, 0.2, 1.2));
  for (auto& o : obs) o.point += Vec2(noise(rng), noise(rng));
  auto weighted = obs;
  weighted[2].weight = 0.0;
  auto removed = obs;
  removed.erase(removed.begin() + 2);
  EXPECT_LT((triangulate_dlt(weighted, rig) - triangulate_dlt(removed, rig)).norm(), 1e-12);
}

TEST(Refine, PerturbedObservationNotWorseThanDlt) {
  const Rig rig = circle_rig(4);
  auto obs = exact(rig, Vec3(0.3, -0.2, 1.1));
  obs[1].point += Vec2(1.0, 0.0);
  const Vec3 dlt = triangulate_dlt(obs, rig);
  const RefineResult r = refine_gauss_newton(dlt, obs, rig);
  EXPECT_LE(r.rms_residual, rms_reprojection(dlt, obs, rig));
  EXPECT_LE(r.objective, reprojection_objective(dlt, obs, rig));
}

TEST(Refine, StationaryAtTruth) {
  const Rig rig = circle_rig(4);
  const Vec3 x(0.1, 0.1, 0.9);
  const RefineResult r = refine_gauss_newton(x, exact(rig, x), rig);
  EXPECT_LE(r.iterations, 1);
  EXPECT_LT(r.rms_residual, 1e-12);
}

TEST(Refine, ConvergesFromOffsetStart) {
  const Rig rig = circle_rig(4);
  const Vec3 x(-0.2, 0.3, 1.4);
  const RefineResult r = refine_gauss_newton(x + Vec3(0.1, 0.1, 0.1), exact(rig, x), rig);
  EXPECT_LT((r.point - x).norm(), 1e-8);
  EXPECT_FALSE(r.behind_camera);
}

TEST(Refine, NeverIncreasesObjectiveUnderNoise) {
  const Rig rig = circle_rig(4);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = testing::random_volume_point(rng);
    auto obs = exact(rig, x);
    for (auto& o : obs) o.point += Vec2(noise(rng), noise(rng));
    const Vec3 dlt = triangulate_dlt(obs, rig);
    const RefineResult r = refine_gauss_newton(dlt, obs, rig);
    EXPECT_LE(r.objective, reprojection_objective(dlt, obs, rig));
    EXPECT_LE(r.rms_residual, rms_reprojection(dlt, obs, rig) + 1e-15);
  }
}

TEST(Refine, StartBehindCameraRejected) {
  const Rig rig = circle_rig(4);
  const auto obs = exact(rig, Vec3(0, 0, 1));
  try {
    refine_gauss_newton(rig[0].center() - 2.0 * rig[0].rotation.row(2).transpose(), obs, rig);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPointBehindCamera);
  }
}

TEST(Consistency, ExactIsZeroShiftedIsPositive) {
  const Rig rig = circle_rig(4);
  auto obs = exact(rig, Vec3(0.2, 0.0, 1.3));
  EXPECT_LT(epipolar_consistency_score(obs, rig), 1e-15);
  obs[0].point += Vec2(1.0, 0.0);
  const double s = epipolar_consistency_score(obs, rig);
  EXPECT_GT(s, 0.0);
  auto reordered = obs;
  std::reverse(reordered.begin(), reordered.end());
  EXPECT_NEAR(epipolar_consistency_score(reordered, rig), s, 1e-15);
}

}  // namespace
}  // namespace densewarp
