#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "densewarp/geometry.hpp"
#include "densewarp/heatmap.hpp"
#include "densewarp/scheduler.hpp"
#include "densewarp/triangulate.hpp"

namespace densewarp {

inline constexpr int kSkeletonJoints = 17;

// Rest pose of the stick figure in metres, z up, feet at z = 0.1. Joint order:
// pelvis, right hip/knee/ankle, left hip/knee/ankle, spine, thorax, neck,
// head, left shoulder/elbow/wrist, right shoulder/elbow/wrist.
const std::vector<Vec3>& rest_skeleton();

struct Box3 {
  Vec3 min = Vec3(-0.8, -0.8, 0.0);
  Vec3 max = Vec3(0.8, 0.8, 1.9);
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  std::vector<Vec3> corners() const;
};

// Joint j moves as base[j] + amplitude[j] * sin(2 pi frequency[j] t + phase[j]).
struct MotionModel {
  std::vector<Vec3> base_pose;
  std::vector<Vec3> amplitude;  // component-wise >= 0
  std::vector<double> frequency;
  std::vector<double> phase;
  Box3 box;
  std::uint64_t seed = 0;

  int joints() const { return static_cast<int>(base_pose.size()); }
  // Throws kOutOfBounds if the motion envelope leaves the box, kBadConfig otherwise.
  void validate() const;
};

struct MotionSpec {
  int joints = kSkeletonJoints;
  double sway_amplitude = 0.3;  // m, whole-body sway along a seeded horizontal direction
  double limb_amplitude = 0.05; // m, per-joint independent component
  double frequency = 1.5;       // Hz, scaled per scene by a seeded factor in [0.8, 1.2]
  Box3 box;
};

// Coherent sway: every joint shares a frequency and (up to a small jitter)
// a phase, with amplitude growing from feet to head.
MotionModel make_motion(const MotionSpec& spec, std::uint64_t seed);

// Throws kOutOfBounds if any joint leaves the box, kBadConfig for t < 0.
std::vector<Vec3> pose_at(const MotionModel& model, double t);

struct RigSpec {
  int views = 4;
  double radius = 4.5;
  double height = 1.2;
  Vec3 look_at = Vec3(0.0, 0.0, 0.95);
  double fx = 48.0;
  double fy = 48.0;
  double cx = 15.5;
  double cy = 15.5;
  int width = 32;
  int image_height = 32;

  void validate() const;
};

// Camera j at angle 2 pi j / M on the circle of `radius` about the z axis at
// `height`, optical axis through look_at, image x along the horizontal.
Rig build_rig(const RigSpec& spec);

// Throws kOutOfBounds naming the camera if a box corner projects outside its image.
void check_coverage(const Rig& rig, const Box3& box);

struct NoiseSpec {
  double peak_jitter_px = 0.0;
  double dropout_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// A synthetic capture: motion, rig, plan and detector noise. Every
// observation is a pure function of (view, frame), so dense and sparse
// queries, and serial and parallel ones, agree bitwise.
class Scene {
 public:
  Scene(MotionModel motion, Rig rig, SamplingPlan plan, double sigma_px, NoiseSpec noise);

  const MotionModel& motion() const { return motion_; }
  const Rig& rig() const { return rig_; }
  const SamplingPlan& plan() const { return plan_; }
  double sigma() const { return sigma_; }
  const NoiseSpec& noise() const { return noise_; }
  int views() const { return static_cast<int>(rig_.size()); }
  int joints() const { return motion_.joints(); }

  double time_of(int frame) const { return (frame - 1) * plan_.phase_step; }
  Skeleton3D truth(int frame) const;
  std::vector<Vec2> truth_2d(int view, int frame) const;

  // Detector-stage heatmap with jitter and dropout, rounded through f32.
  Heatmap observe(int view, int frame) const;
  // Noise-free render of the true projections.
  Heatmap clean(int view, int frame) const;

 private:
  MotionModel motion_;
  Rig rig_;
  SamplingPlan plan_;
  double sigma_;
  NoiseSpec noise_;
};

struct Sequence {
  std::vector<PlannedSample> samples;
  std::vector<Heatmap> heatmaps;   // one per sample, same order
  std::vector<Skeleton3D> truth;   // frame slot k at index k - 1
};

Sequence sample_sequence(const Scene& scene, double duration, int threads = 1);

// CSV with header frame,joint,x,y,z.
void write_truth_csv(std::ostream& out, const std::vector<Skeleton3D>& truth);

// Plain-text rig description: one camera per line, id, w, h, K (9), R (9), t (3).
void write_rig(std::ostream& out, const Rig& rig);
Rig read_rig(std::istream& in);
void write_rig_file(const std::filesystem::path& path, const Rig& rig);
Rig read_rig_file(const std::filesystem::path& path);

}  // namespace densewarp
