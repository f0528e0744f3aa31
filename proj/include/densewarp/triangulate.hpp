#pragma once

#include <span>
#include <vector>

#include "densewarp/geometry.hpp"

namespace densewarp {

struct Observation {
  int view = 0;
  Vec2 point = Vec2::Zero();
  double weight = 1.0;
};

struct Skeleton3D {
  int frame = 0;
  std::vector<Vec3> joints;
  std::vector<double> per_joint_residual;  // RMS reprojection error, px
};

// Linear triangulation from the stacked cross-product constraints q x (P X) = 0.
// Zero-weight observations are ignored outright.
Vec3 triangulate_dlt(std::span<const Observation> obs, const Rig& rig);

struct RefineResult {
  Vec3 point;
  double objective = 0.0;      // weighted sum of squared reprojection errors
  double rms_residual = 0.0;   // unweighted RMS over contributing observations, px
  int iterations = 0;
  bool behind_camera = false;  // an iterate left the front of a camera; last valid one returned
};

// Weighted sum of squared reprojection errors; +inf if X is behind a contributing camera.
double reprojection_objective(const Vec3& x, std::span<const Observation> obs, const Rig& rig);
double rms_reprojection(const Vec3& x, std::span<const Observation> obs, const Rig& rig);

RefineResult refine_gauss_newton(const Vec3& x0, std::span<const Observation> obs, const Rig& rig,
                                 int max_iterations = 20, double tolerance = 1e-10);

// Sum over view pairs of squared epipolar residuals of the measured points.
double epipolar_consistency_score(std::span<const Observation> obs, const Rig& rig);

}  // namespace densewarp
