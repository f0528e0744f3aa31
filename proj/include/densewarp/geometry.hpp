#pragma once

#include <Eigen/Dense>

#include <vector>

#include "densewarp/error.hpp"

namespace densewarp {

using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4, Eigen::RowMajor>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Pinhole camera. Pixel coordinates are continuous with the origin at the
// centre of the top-left pixel; u grows along columns, v along rows.
struct CameraView {
  int id = 0;
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // camera frame
  int width = 1;
  int height = 1;

  // Throws kInvalidCamera when R is not a proper rotation or K/size are invalid.
  void validate() const;

  Vec3 center() const { return -rotation.transpose() * translation; }
  // Depth of a world point along the optical axis.
  double depth(const Vec3& point) const { return (rotation * point + translation).z(); }
};

using Rig = std::vector<CameraView>;

// P = K [R | t]; rank 3 for any valid camera.
struct ProjectionMatrix {
  Mat34 p;
};

ProjectionMatrix projection_matrix(const CameraView& cam);

Vec2 project_point(const CameraView& cam, const Vec3& point);

// Epipolar relation q_to^T F q_from = 0 between two views.
struct FundamentalMatrix {
  Mat3 f = Mat3::Zero();
  int from_view = 0;
  int to_view = 0;

  FundamentalMatrix transposed() const { return {f.transpose(), to_view, from_view}; }
};

// Unit-Frobenius F with the largest-magnitude entry made positive.
Mat3 normalize_fundamental(const Mat3& f);

FundamentalMatrix fundamental_from_cameras(const CameraView& from, const CameraView& to);

// E = [t]x R for the pose of `to` relative to `from`.
Mat3 essential_from_cameras(const CameraView& from, const CameraView& to);

Mat3 skew(const Vec3& v);

// Right null vector of F (homogeneous epipole in the from-view image), unit norm.
Vec3 epipole(const FundamentalMatrix& f);

// Line a*u + b*v + c = 0 with a^2 + b^2 = 1.
struct EpipolarLine {
  Vec3 coeffs;

  double signed_distance(const Vec2& q) const { return coeffs.x() * q.x() + coeffs.y() * q.y() + coeffs.z(); }
};

// Normalizes raw homogeneous line coefficients; kDegenerateLine when (a, b) vanish.
EpipolarLine make_line(const Vec3& raw);

EpipolarLine epipolar_line(const FundamentalMatrix& f, const Vec2& q);

double sampson_distance(const FundamentalMatrix& f, const Vec2& q, const Vec2& q_prime);

// Fundamental matrices between every ordered pair of views, built once per rig.
class EpipolarRig {
 public:
  explicit EpipolarRig(const Rig& rig);

  std::size_t size() const { return views_; }
  const FundamentalMatrix& between(int from, int to) const;
  const CameraView& camera(int view) const { return rig_.at(static_cast<std::size_t>(view)); }
  const Rig& rig() const { return rig_; }

 private:
  Rig rig_;
  std::size_t views_;
  std::vector<FundamentalMatrix> pairs_;
};

}  // namespace densewarp
