#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynfg/spatial.hpp"

namespace dynfg {

struct UrdfError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedXml : UrdfError {
  using UrdfError::UrdfError;
};
struct UnsupportedJointType : UrdfError {
  using UrdfError::UrdfError;
};
struct BranchingChain : UrdfError {
  using UrdfError::UrdfError;
};

enum class JointKind { Revolute, Prismatic };

struct Link {
  std::string name;
  SpatialInertia inertia;
  Pose com_frame;  // COM frame expressed in the link frame
};

struct Joint {
  std::string name;
  JointKind kind = JointKind::Revolute;
  ScrewAxis axis;   // in the child link COM frame
  Pose offset;      // parent COM to child COM at q = 0
  double lower_limit = -std::numeric_limits<double>::infinity();
  double upper_limit = std::numeric_limits<double>::infinity();
  double velocity_limit = std::numeric_limits<double>::infinity();
  double effort_limit = std::numeric_limits<double>::infinity();
};

/// Serial chain: joint i connects link i-1 to link i, link 0 is the fixed base.
struct RobotModel {
  std::vector<Link> links;    // moving links 1..n (size n)
  std::vector<Joint> joints;  // size n
  Twist base_acceleration;    // Vdot_0 boundary, encodes gravity
  Wrench tool_wrench;         // F_t boundary
  Pose tool_offset;           // last-link COM to tool frame

  int dof() const { return static_cast<int>(joints.size()); }

  /// T_{i-1,i}(q_i): child COM frame in parent COM frame, i in 1..n.
  Pose parent_to_child(int joint_index, double q) const;
};

struct JointState {
  Eigen::VectorXd q, qd, qdd, tau;
  std::vector<bool> qdd_known, tau_known;

  static JointState Zero(int n);
};

struct WarningSink {
  std::vector<std::string> messages;
  void warn(const std::string& msg) { messages.push_back(msg); }
};

RobotModel load_urdf(const std::string& text, WarningSink* warnings = nullptr);
RobotModel load_urdf_file(const std::string& path, WarningSink* warnings = nullptr);

/// Forward recursion of the twist constraint from V_0 = 0.
std::vector<Twist> compute_twists(const RobotModel& model, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd);

/// Gravity enters as a fictitious upward base acceleration: Vdot_0 = (0, -g).
Twist gravity_base_acceleration(const Vec3& g);

}  // namespace dynfg
