#pragma once

#include <Eigen/Dense>

namespace dynfg {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// All 6-vectors are ordered angular-first: twist = (omega, v), wrench = (moment, force).

/// Twist (omega, v). Also used for twist accelerations.
struct Twist {
  Vec6 vec = Vec6::Zero();

  Twist() = default;
  explicit Twist(const Vec6& v) : vec(v) {}
  Twist(const Vec3& angular, const Vec3& linear) {
    vec << angular, linear;
  }

  Vec3 angular() const { return vec.head<3>(); }
  Vec3 linear() const { return vec.tail<3>(); }

  static Twist Zero() { return Twist{}; }
};

/// Wrench (moment, force).
struct Wrench {
  Vec6 vec = Vec6::Zero();

  Wrench() = default;
  explicit Wrench(const Vec6& v) : vec(v) {}
  Wrench(const Vec3& moment, const Vec3& force) {
    vec << moment, force;
  }

  Vec3 moment() const { return vec.head<3>(); }
  Vec3 force() const { return vec.tail<3>(); }

  static Wrench Zero() { return Wrench{}; }
};

/// Rigid transform in SE(3), stored as an orthonormal rotation matrix plus translation.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose Identity() { return Pose{}; }
  static Pose FromRotation(const Mat3& r) { return Pose(r, Vec3::Zero()); }
  static Pose FromTranslation(const Vec3& t) { return Pose(Mat3::Identity(), t); }
  static Pose RotZ(double angle);
  static Pose RotY(double angle);
  static Pose RotX(double angle);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Pose inverse() const;
  Mat4 homogeneous() const;

  /// Group product: this * other as homogeneous matrices.
  Pose operator*(const Pose& other) const;

  bool isApprox(const Pose& other, double tol = 1e-12) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Screw axis of a joint, expressed in the child link COM frame.
/// Revolute axes have unit angular part, prismatic axes unit linear part.
struct ScrewAxis {
  Vec6 axis = Vec6::Zero();

  ScrewAxis() = default;
  explicit ScrewAxis(const Vec6& a) : axis(a) {}

  static ScrewAxis Revolute(const Vec3& direction, const Vec3& point_offset = Vec3::Zero());
  static ScrewAxis Prismatic(const Vec3& direction);
};

/// 6x6 spatial inertia. Block-diagonal diag(I_rot, m*I) when expressed at the COM.
struct SpatialInertia {
  Mat6 matrix = Mat6::Zero();

  SpatialInertia() = default;
  explicit SpatialInertia(const Mat6& m) : matrix(m) {}

  /// Inertia at the COM from mass and rotational inertia tensor.
  static SpatialInertia FromMassInertia(double mass, const Mat3& rotational);

  double mass() const { return matrix(5, 5); }
};

Mat3 skew(const Vec3& v);

Pose compose(const Pose& a, const Pose& b);

/// Adjoint of a transform: [[R, 0], [skew(p)*R, R]].
Mat6 adjoint(const Pose& t);

/// Lie-bracket matrix of a twist: [[skew(w), 0], [skew(v), skew(w)]].
Mat6 ad(const Twist& v);

/// Derivative helper: the matrix M(w) with M(w)*dV = ad(dV)^T * w.
Mat6 ad_transpose_by_arg(const Wrench& w);

/// SE(3) exponential of axis*q.
Pose se3_exp(const Vec6& screw, double q);

/// offset * exp(axis*q): the parent-COM-to-child-COM transform of a joint at value q.
Pose joint_pose(const ScrewAxis& axis, double q, const Pose& offset);

/// Nearest orthonormal matrix (polar projection).
Mat3 project_rotation(const Mat3& m);

}  // namespace dynfg
