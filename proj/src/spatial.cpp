#include "dynfg/spatial.hpp"

#include <cmath>
#include <stdexcept>

namespace dynfg {

namespace {
constexpr double kOrthonormalityDrift = 1e-9;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
      -v.y(), v.x(), 0;
  return m;
}

Mat3 project_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if ((rotation_.transpose() * rotation_ - Mat3::Identity()).norm() > kOrthonormalityDrift) {
    rotation_ = project_rotation(rotation_);
  }
}

Pose Pose::RotZ(double angle) {
  return FromRotation(Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix());
}

Pose Pose::RotY(double angle) {
  return FromRotation(Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix());
}

Pose Pose::RotX(double angle) {
  return FromRotation(Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix());
}

Pose Pose::inverse() const {
  return Pose(rotation_.transpose(), -(rotation_.transpose() * translation_));
}

Mat4 Pose::homogeneous() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

bool Pose::isApprox(const Pose& other, double tol) const {
  return (rotation_ - other.rotation_).norm() < tol &&
         (translation_ - other.translation_).norm() < tol;
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }

Mat6 adjoint(const Pose& t) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = t.rotation();
  m.bottomLeftCorner<3, 3>() = skew(t.translation()) * t.rotation();
  m.bottomRightCorner<3, 3>() = t.rotation();
  return m;
}

Mat6 ad(const Twist& v) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = skew(v.angular());
  m.bottomLeftCorner<3, 3>() = skew(v.linear());
  m.bottomRightCorner<3, 3>() = skew(v.angular());
  return m;
}

Mat6 ad_transpose_by_arg(const Wrench& w) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = skew(w.moment());
  m.topRightCorner<3, 3>() = skew(w.force());
  m.bottomLeftCorner<3, 3>() = skew(w.force());
  return m;
}

ScrewAxis ScrewAxis::Revolute(const Vec3& direction, const Vec3& point_offset) {
  Vec3 dir = direction.normalized();
  Vec6 a;
  a << dir, point_offset.cross(dir);
  return ScrewAxis(a);
}

ScrewAxis ScrewAxis::Prismatic(const Vec3& direction) {
  Vec6 a;
  a << Vec3::Zero(), direction.normalized();
  return ScrewAxis(a);
}

SpatialInertia SpatialInertia::FromMassInertia(double mass, const Mat3& rotational) {
  Mat6 g = Mat6::Zero();
  g.topLeftCorner<3, 3>() = rotational;
  g.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
  return SpatialInertia(g);
}

Pose se3_exp(const Vec6& screw, double q) {
  const Vec3 omega = screw.head<3>();
  const Vec3 v = screw.tail<3>();
  const double wn = omega.norm();
  if (wn * std::abs(q) < 1e-14) {
    return Pose(Mat3::Identity() + skew(omega * q), v * q);
  }
  // Rodrigues on the (not necessarily unit) rotation part.
  const Vec3 axis = omega / wn;
  const double theta = wn * q;
  const Mat3 k = skew(axis);
  const Mat3 r = Mat3::Identity() + std::sin(theta) * k + (1 - std::cos(theta)) * k * k;
  const Mat3 g = Mat3::Identity() * theta + (1 - std::cos(theta)) * k +
                 (theta - std::sin(theta)) * k * k;
  return Pose(r, g * (v / wn));
}

Pose joint_pose(const ScrewAxis& axis, double q, const Pose& offset) {
  return offset * se3_exp(axis.axis, q);
}

}  // namespace dynfg
