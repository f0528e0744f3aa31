#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "densewarp/geometry.hpp"

namespace densewarp::testing {

// Camera at `centre` looking at `target`, z up; built independently of the synth module.
inline CameraView look_at_camera(int id, const Vec3& centre, const Vec3& target, double focal, int width,
                                 int height) {
  const Vec3 forward = (target - centre).normalized();
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  CameraView cam;
  cam.id = id;
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.translation = -cam.rotation * centre;
  cam.intrinsics << focal, 0, (width - 1) / 2.0, 0, focal, (height - 1) / 2.0, 0, 0, 1;
  cam.width = width;
  cam.height = height;
  return cam;
}

// M cameras evenly spaced on a circle around the z axis, looking at (0, 0, 1).
inline Rig circle_rig(int views, double radius = 4.0, double height = 3.0, double focal = 58.0, int width = 32,
                      int image_height = 32, double phase = 0.3) {
  Rig rig;
  for (int v = 0; v < views; ++v) {
    const double a = phase + 2.0 * std::numbers::pi * v / views;
    rig.push_back(look_at_camera(v, Vec3(radius * std::cos(a), radius * std::sin(a), height), Vec3(0, 0, 1), focal,
                                 width, image_height));
  }
  return rig;
}

// Point drawn uniformly from the working volume [-0.5, 0.5]^2 x [0.2, 1.8].
inline Vec3 random_volume_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-0.5, 0.5);
  std::uniform_real_distribution<double> z(0.2, 1.8);
  return {xy(rng), xy(rng), z(rng)};
}

}  // namespace densewarp::testing
