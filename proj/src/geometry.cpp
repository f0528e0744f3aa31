#include "densewarp/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace densewarp {
namespace {

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace

void CameraView::validate() const {
  if (!finite(intrinsics) || !finite(rotation) || !finite(translation)) {
    throw Error(ErrorCode::kNonFinite, "camera " + std::to_string(id) + " has non-finite parameters");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho >= 1e-9 || std::abs(det - 1.0) >= 1e-9) {
    std::ostringstream os;
    os << "camera " << id << " rotation is not orthonormal (|RtR-I|=" << ortho << ", det=" << det << ")";
    throw Error(ErrorCode::kInvalidCamera, os.str());
  }
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0)) {
    throw Error(ErrorCode::kInvalidCamera, "camera " + std::to_string(id) + " focal lengths must be positive");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidCamera, "camera " + std::to_string(id) + " image size must be >= 1");
  }
}

ProjectionMatrix projection_matrix(const CameraView& cam) {
  Mat34 rt;
  rt.leftCols<3>() = cam.rotation;
  rt.col(3) = cam.translation;
  return {cam.intrinsics * rt};
}

Vec2 project_point(const CameraView& cam, const Vec3& point) {
  if (!point.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "point to project is not finite");
  }
  const Vec3 in_cam = cam.rotation * point + cam.translation;
  if (!in_cam.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "camera transform produced a non-finite point");
  }
  if (in_cam.z() <= 1e-9) {
    throw Error(ErrorCode::kPointBehindCamera, "depth " + std::to_string(in_cam.z()) + " in camera " +
                                                   std::to_string(cam.id));
  }
  const Vec3 h = cam.intrinsics * in_cam;
  return {h.x() / h.z(), h.y() / h.z()};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Mat3 normalize_fundamental(const Mat3& f) {
  const double norm = f.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kNonFinite, "fundamental matrix has zero or non-finite norm");
  }
  Mat3 out = f / norm;
  const double largest = out.cwiseAbs().maxCoeff();
  // First entry (row-major) within rounding of the largest magnitude decides the sign.
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(out(r, c)) >= largest * (1.0 - 1e-12)) {
        return out(r, c) < 0.0 ? Mat3(-out) : out;
      }
    }
  }
  return out;
}

Mat3 essential_from_cameras(const CameraView& from, const CameraView& to) {
  const Mat3 r_rel = to.rotation * from.rotation.transpose();
  const Vec3 t_rel = to.translation - r_rel * from.translation;
  return skew(t_rel) * r_rel;
}

FundamentalMatrix fundamental_from_cameras(const CameraView& from, const CameraView& to) {
  const double baseline = (from.center() - to.center()).norm();
  if (!(baseline >= 1e-9)) {
    throw Error(ErrorCode::kCoincidentCenters, "views " + std::to_string(from.id) + " and " +
                                                   std::to_string(to.id) + " share a camera centre");
  }
  const Mat3 e = essential_from_cameras(from, to);
  const Mat3 f = to.intrinsics.inverse().transpose() * e * from.intrinsics.inverse();
  return {normalize_fundamental(f), from.id, to.id};
}

Vec3 epipole(const FundamentalMatrix& f) {
  Eigen::JacobiSVD<Mat3> svd(f.f, Eigen::ComputeFullV);
  return svd.matrixV().col(2);
}

EpipolarLine make_line(const Vec3& raw) {
  const double n = std::hypot(raw.x(), raw.y());
  if (!(n >= 1e-12)) {
    throw Error(ErrorCode::kDegenerateLine, "point maps to the line at infinity (it is the epipole)");
  }
  return {raw / n};
}

EpipolarLine epipolar_line(const FundamentalMatrix& f, const Vec2& q) {
  if (!q.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "pixel for epipolar line is not finite");
  }
  return make_line(f.f * q.homogeneous());
}

double sampson_distance(const FundamentalMatrix& f, const Vec2& q, const Vec2& q_prime) {
  if (!q.allFinite() || !q_prime.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "sampson distance of a non-finite point");
  }
  const Vec3 x = q.homogeneous();
  const Vec3 xp = q_prime.homogeneous();
  const Vec3 fx = f.f * x;
  const Vec3 ftxp = f.f.transpose() * xp;
  const double denom = fx.x() * fx.x() + fx.y() * fx.y() + ftxp.x() * ftxp.x() + ftxp.y() * ftxp.y();
  if (denom < 1e-15) {
    throw Error(ErrorCode::kDegenerateDenominator, "sampson denominator vanished");
  }
  return xp.dot(fx) / denom;
}

EpipolarRig::EpipolarRig(const Rig& rig) : rig_(rig), views_(rig.size()), pairs_(rig.size() * rig.size()) {
  for (std::size_t a = 0; a < views_; ++a) {
    rig[a].validate();
    if (rig[a].id != static_cast<int>(a)) {
      throw Error(ErrorCode::kRigMismatch, "camera at position " + std::to_string(a) + " has id " +
                                               std::to_string(rig[a].id));
    }
  }
  for (std::size_t a = 0; a < views_; ++a) {
    for (std::size_t b = 0; b < views_; ++b) {
      if (a != b) pairs_[a * views_ + b] = fundamental_from_cameras(rig[a], rig[b]);
    }
  }
}

const FundamentalMatrix& EpipolarRig::between(int from, int to) const {
  if (from < 0 || to < 0 || static_cast<std::size_t>(from) >= views_ || static_cast<std::size_t>(to) >= views_ ||
      from == to) {
    throw Error(ErrorCode::kRigMismatch, "no fundamental matrix for views " + std::to_string(from) + "->" +
                                             std::to_string(to));
  }
  return pairs_[static_cast<std::size_t>(from) * views_ + static_cast<std::size_t>(to)];
}

}  // namespace densewarp
