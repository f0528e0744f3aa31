#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "densewarp/error.hpp"
#include "densewarp/synth.hpp"

namespace densewarp {
namespace {

MotionModel single_joint(const Vec3& amplitude, double freq, double phase = 0.3) {
  MotionModel m;
  m.base_pose = {Vec3(0.0, 0.0, 1.0)};
  m.amplitude = {amplitude};
  m.frequency = {freq};
  m.phase = {phase};
  return m;
}

Scene default_scene(NoiseSpec noise = {}, std::uint64_t seed = 3) {
  return Scene(make_motion(MotionSpec{}, seed), build_rig(RigSpec{}), SamplingPlan::uniform(4, 12.5), 2.0, noise);
}

TEST(Motion, ZeroAmplitudeIsStatic) {
  MotionSpec spec;
  spec.sway_amplitude = 0.0;
  spec.limb_amplitude = 0.0;
  const MotionModel m = make_motion(spec, 4);
  for (double t : {0.0, 0.37, 5.0, 123.4}) {
    const auto pose = pose_at(m, t);
    for (int j = 0; j < m.joints(); ++j) EXPECT_EQ(pose[j], m.base_pose[j]);
  }
}

TEST(Motion, PeriodicAtOneHertz) {
  const MotionModel m = single_joint(Vec3(0.2, 0.1, 0.05), 1.0);
  for (double t : {0.0, 0.21, 3.7}) EXPECT_LT((pose_at(m, t)[0] - pose_at(m, t + 1.0)[0]).norm(), 1e-12);
}

TEST(Motion, StepBoundedByVelocity) {
  const Vec3 amp(0.3, 0.0, 0.0);
  const MotionModel m = single_joint(amp, 0.5);
  const double delta = 0.02;
  const double bound = 2.0 * std::numbers::pi * 0.5 * amp.norm() * delta;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double t = k * delta;
    worst = std::max(worst, (pose_at(m, t + delta)[0] - pose_at(m, t)[0]).norm());
  }
  EXPECT_LE(worst, bound);
}

TEST(Motion, OutOfBounds) {
  MotionModel m = single_joint(Vec3(0.5, 0.0, 0.0), 1.0);
  m.box.max = Vec3(0.4, 0.8, 1.9);
  try {
    m.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
  EXPECT_THROW(pose_at(m, 0.25), Error);
  MotionSpec spec;
  spec.sway_amplitude = 2.0;
  EXPECT_THROW(make_motion(spec, 1), Error);
}

TEST(Motion, DeterministicPerSeed) {
  const MotionModel a = make_motion(MotionSpec{}, 9);
  const MotionModel b = make_motion(MotionSpec{}, 9);
  const MotionModel c = make_motion(MotionSpec{}, 10);
  EXPECT_EQ(a.amplitude, b.amplitude);
  EXPECT_EQ(a.phase, b.phase);
  EXPECT_NE(a.phase, c.phase);
  for (const Vec3& amp : a.amplitude) EXPECT_TRUE((amp.array() >= 0.0).all());
}

TEST(Rig, EqualAnglesAndLookAt) {
  RigSpec spec;
  const Rig rig = build_rig(spec);
  ASSERT_EQ(rig.size(), 4u);
  for (int j = 0; j < 4; ++j) {
    const Vec3 c = rig[j].center();
    EXPECT_NEAR(std::atan2(c.y(), c.x()), std::remainder(j * std::numbers::pi / 2, 2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(c.z(), spec.height, 1e-12);
    EXPECT_NEAR(Vec2(c.x(), c.y()).norm(), spec.radius, 1e-12);
    const Vec2 q = project_point(rig[j], spec.look_at);
    EXPECT_NEAR(q.x(), spec.cx, 1e-6);
    EXPECT_NEAR(q.y(), spec.cy, 1e-6);
  }
}

TEST(Rig, RestPoseAndBoxVisible) {
  const Rig rig = build_rig(RigSpec{});
  for (const CameraView& cam : rig) {
    for (const Vec3& p : rest_skeleton()) {
      const Vec2 q = project_point(cam, p);
      EXPECT_GE(q.x(), 0.0);
      EXPECT_GE(q.y(), 0.0);
      EXPECT_LE(q.x(), cam.width - 1);
      EXPECT_LE(q.y(), cam.height - 1);
    }
  }
  EXPECT_NO_THROW(check_coverage(rig, Box3{}));
  RigSpec zoomed;
  zoomed.fx = zoomed.fy = 200.0;
  EXPECT_THROW(check_coverage(build_rig(zoomed), Box3{}), Error);
}

TEST(Rig, LookAtDegenerate) {
  RigSpec spec;
  spec.look_at = Vec3(spec.radius, 0.0, spec.height);
  try {
    build_rig(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLookAtDegenerate);
  }
}

TEST(Rig, FileRoundTripIsExact) {
  const Rig rig = build_rig(RigSpec{});
  std::stringstream s;
  write_rig(s, rig);
  const Rig back = read_rig(s);
  ASSERT_EQ(back.size(), rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) {
    EXPECT_EQ(back[i].intrinsics, rig[i].intrinsics);
    EXPECT_EQ(back[i].rotation, rig[i].rotation);
    EXPECT_EQ(back[i].translation, rig[i].translation);
  }
}

TEST(Sequence, ZeroNoiseDecodesToTruth) {
  const Scene scene = default_scene();
  const Sequence seq = sample_sequence(scene, 0.4);
  double worst = 0.0;
  for (std::size_t i = 0; i < seq.samples.size(); ++i) {
    const auto truth = scene.truth_2d(seq.samples[i].view, seq.samples[i].frame);
    for (int j = 0; j < scene.joints(); ++j) {
      worst = std::max(worst, (decode_peak(seq.heatmaps[i], j).position - truth[j]).norm());
    }
  }
  EXPECT_LT(worst, 0.15);
}

TEST(Sequence, FullDropoutEmptiesChannels) {
  const Scene scene = default_scene({0.0, 1.0, 5});
  const Heatmap h = scene.observe(1, 3);
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
  try {
    decode_peak(h, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyChannel);
  }
}

TEST(Sequence, DeterministicAndThreadIndependent) {
  const Scene scene = default_scene({0.5, 0.2, 11});
  const Sequence a = sample_sequence(scene, 0.3, 1);
  const Sequence b = sample_sequence(scene, 0.3, 4);
  ASSERT_EQ(a.heatmaps.size(), b.heatmaps.size());
  for (std::size_t i = 0; i < a.heatmaps.size(); ++i) EXPECT_TRUE(a.heatmaps[i].values_equal(b.heatmaps[i]));
  const Heatmap again = default_scene({0.5, 0.2, 11}).observe(2, 7);
  EXPECT_TRUE(again.values_equal(scene.observe(2, 7)));
  EXPECT_FALSE(default_scene({0.5, 0.2, 12}).observe(2, 7).values_equal(again));
}

TEST(Sequence, MatchesPlanWithCompleteTruth) {
  const Scene scene = default_scene({0.3, 0.0, 2});
  const Sequence seq = sample_sequence(scene, 0.5);
  const auto plan = generate_plan_times(scene.plan(), 0.5);
  ASSERT_EQ(seq.samples.size(), plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    EXPECT_EQ(seq.heatmaps[i].view(), plan[i].view);
    EXPECT_EQ(seq.heatmaps[i].frame(), plan[i].frame);
  }
  ASSERT_EQ(seq.truth.size(), static_cast<std::size_t>(plan.back().frame));
  for (std::size_t k = 0; k < seq.truth.size(); ++k) {
    EXPECT_EQ(seq.truth[k].frame, static_cast<int>(k) + 1);
    EXPECT_EQ(seq.truth[k].joints.size(), static_cast<std::size_t>(scene.joints()));
    for (int v = 0; v < scene.views(); ++v) EXPECT_EQ(scene.truth_2d(v, static_cast<int>(k) + 1).size(), 17u);
  }
}

TEST(Sequence, JitterMovesPeaks) {
  const Scene noisy = default_scene({0.5, 0.0, 4});
  const auto truth = noisy.truth_2d(0, 5);
  const Heatmap h = noisy.observe(0, 5);
  double mean = 0.0;
  for (int j = 0; j < noisy.joints(); ++j) mean += (decode_peak(h, j).position - truth[j]).norm();
  mean /= noisy.joints();
  // Mean of a Rayleigh variable with scale 0.5 is 0.627.
  EXPECT_GT(mean, 0.3);
  EXPECT_LT(mean, 1.0);
}

TEST(Scene, RejectsBadSettings) {
  EXPECT_THROW(default_scene({-1.0, 0.0, 0}), Error);
  EXPECT_THROW(default_scene({0.0, 1.5, 0}), Error);
  EXPECT_THROW(Scene(make_motion(MotionSpec{}, 1), build_rig(RigSpec{}), SamplingPlan::uniform(3, 12.5), 2.0, {}),
               Error);
}

}  // namespace
}  // namespace densewarp
