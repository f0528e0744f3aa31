#include "densewarp/triangulate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace densewarp {
namespace {

const CameraView& camera_for(const Rig& rig, int view) {
  if (view < 0 || static_cast<std::size_t>(view) >= rig.size()) {
    throw Error(ErrorCode::kRigMismatch, "observation references unknown view " + std::to_string(view));
  }
  return rig[static_cast<std::size_t>(view)];
}

void check_observation(const Observation& o) {
  if (!o.point.allFinite() || !std::isfinite(o.weight)) {
    throw Error(ErrorCode::kNonFinite, "observation is not finite");
  }
  if (o.weight < 0.0 || o.weight > 1.0) {
    throw Error(ErrorCode::kBadConfig, "observation weight must lie in [0, 1]");
  }
}

}  // namespace

Vec3 triangulate_dlt(std::span<const Observation> obs, const Rig& rig) {
  std::vector<Eigen::RowVector4d> rows;
  std::set<int> views;
  std::vector<Vec3> centres;
  for (const Observation& o : obs) {
    check_observation(o);
    if (o.weight == 0.0) continue;
    const CameraView& cam = camera_for(rig, o.view);
    const Mat34 p = projection_matrix(cam).p;
    const Eigen::RowVector4d r1 = o.point.x() * p.row(2) - p.row(0);
    const Eigen::RowVector4d r2 = o.point.y() * p.row(2) - p.row(1);
    rows.push_back(o.weight * r1 / r1.norm());
    rows.push_back(o.weight * r2 / r2.norm());
    if (views.insert(o.view).second) centres.push_back(cam.center());
  }
  if (views.size() < 2) {
    throw Error(ErrorCode::kInsufficientViews, "triangulation needs at least two weighted views");
  }
  bool has_baseline = false;
  for (std::size_t i = 1; i < centres.size() && !has_baseline; ++i) {
    has_baseline = (centres[i] - centres[0]).norm() >= 1e-9;
  }
  if (!has_baseline) {
    throw Error(ErrorCode::kDegenerateGeometry, "all contributing cameras share one centre");
  }
  Eigen::Matrix<double, Eigen::Dynamic, 4> a(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = rows[i];
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 4>> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d s = svd.singularValues();
  const double smallest = s(3);
  const double second = s(2);
  if (second - smallest < 1e-12 * std::max(s(0), 1e-300)) {
    throw Error(ErrorCode::kDegenerateGeometry, "two smallest singular values coincide");
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-300) throw Error(ErrorCode::kDegenerateGeometry, "triangulated point at infinity");
  return x.head<3>() / x(3);
}

double reprojection_objective(const Vec3& x, std::span<const Observation> obs, const Rig& rig) {
  double total = 0.0;
  for (const Observation& o : obs) {
    if (o.weight == 0.0) continue;
    const CameraView& cam = camera_for(rig, o.view);
    if (cam.depth(x) <= 1e-9) return std::numeric_limits<double>::infinity();
    total += o.weight * (project_point(cam, x) - o.point).squaredNorm();
  }
  return total;
}

double rms_reprojection(const Vec3& x, std::span<const Observation> obs, const Rig& rig) {
  double total = 0.0;
  int count = 0;
  for (const Observation& o : obs) {
    if (o.weight == 0.0) continue;
    const CameraView& cam = camera_for(rig, o.view);
    if (cam.depth(x) <= 1e-9) return std::numeric_limits<double>::infinity();
    total += (project_point(cam, x) - o.point).squaredNorm();
    ++count;
  }
  return count == 0 ? 0.0 : std::sqrt(total / count);
}

RefineResult refine_gauss_newton(const Vec3& x0, std::span<const Observation> obs, const Rig& rig,
                                 int max_iterations, double tolerance) {
  if (!x0.allFinite()) throw Error(ErrorCode::kNonFinite, "initial point is not finite");
  for (const Observation& o : obs) check_observation(o);
  RefineResult result{x0, reprojection_objective(x0, obs, rig), 0.0, 0, false};
  if (!std::isfinite(result.objective)) {
    throw Error(ErrorCode::kPointBehindCamera, "initial point is behind a contributing camera");
  }

  for (int it = 0; it < max_iterations; ++it) {
    Mat3 jtj = Mat3::Zero();
    Vec3 jtr = Vec3::Zero();
    for (const Observation& o : obs) {
      if (o.weight == 0.0) continue;
      const CameraView& cam = camera_for(rig, o.view);
      const Vec3 xc = cam.rotation * result.point + cam.translation;
      const Vec3 h = cam.intrinsics * xc;
      const Vec2 proj(h.x() / h.z(), h.y() / h.z());
      // d(proj)/d(h) then chain through K*R.
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << 1.0 / h.z(), 0.0, -h.x() / (h.z() * h.z()),
               0.0, 1.0 / h.z(), -h.y() / (h.z() * h.z());
      const Eigen::Matrix<double, 2, 3> jac = dproj * cam.intrinsics * cam.rotation;
      const Vec2 residual = proj - o.point;
      jtj += o.weight * jac.transpose() * jac;
      jtr += o.weight * jac.transpose() * residual;
    }
    const Vec3 step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    result.iterations = it + 1;

    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving <= 8; ++halving, scale *= 0.5) {
      const Vec3 candidate = result.point + scale * step;
      bool behind = false;
      for (const Observation& o : obs) {
        if (o.weight != 0.0 && camera_for(rig, o.view).depth(candidate) <= 1e-9) behind = true;
      }
      if (behind) {
        result.behind_camera = true;
        continue;
      }
      const double f = reprojection_objective(candidate, obs, rig);
      if (f <= result.objective) {
        result.point = candidate;
        result.objective = f;
        improved = true;
        break;
      }
    }
    if (!improved || scale * step.norm() < tolerance) break;
  }
  result.rms_residual = rms_reprojection(result.point, obs, rig);
  return result;
}

double epipolar_consistency_score(std::span<const Observation> obs, const Rig& rig) {
  double score = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      if (obs[i].view == obs[j].view) continue;
      const FundamentalMatrix f = fundamental_from_cameras(camera_for(rig, obs[i].view), camera_for(rig, obs[j].view));
      const double r = obs[j].point.homogeneous().dot(f.f * obs[i].point.homogeneous());
      score += r * r;
    }
  }
  return score;
}

}  // namespace densewarp
