#include "dynfg/robot.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dynfg {

namespace pt = boost::property_tree;

Pose RobotModel::parent_to_child(int joint_index, double q) const {
  const Joint& j = joints.at(static_cast<size_t>(joint_index - 1));
  return joint_pose(j.axis, q, j.offset);
}

JointState JointState::Zero(int n) {
  JointState s;
  s.q = Eigen::VectorXd::Zero(n);
  s.qd = Eigen::VectorXd::Zero(n);
  s.qdd = Eigen::VectorXd::Zero(n);
  s.tau = Eigen::VectorXd::Zero(n);
  s.qdd_known.assign(static_cast<size_t>(n), false);
  s.tau_known.assign(static_cast<size_t>(n), false);
  return s;
}

namespace {

Vec3 parse_vec3(const std::string& text, const std::string& what) {
  std::istringstream ss(text);
  Vec3 v;
  if (!(ss >> v.x() >> v.y() >> v.z())) {
    throw MalformedXml("cannot parse 3-vector in " + what + ": '" + text + "'");
  }
  return v;
}

Pose parse_origin(const pt::ptree& node) {
  Vec3 xyz = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();
  if (auto attr = node.get_child_optional("origin.<xmlattr>")) {
    if (auto s = attr->get_optional<std::string>("xyz")) xyz = parse_vec3(*s, "origin xyz");
    if (auto s = attr->get_optional<std::string>("rpy")) rpy = parse_vec3(*s, "origin rpy");
  }
  const Mat3 r = (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
                  Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
                  Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
                     .toRotationMatrix();
  return Pose(r, xyz);
}

struct UrdfLink {
  std::string name;
  double mass = 0;
  Mat3 inertia = Mat3::Zero();
  Pose inertial_origin;  // COM frame in link frame
  bool has_inertial = false;
};

struct UrdfJoint {
  std::string name;
  std::string type;
  std::string parent, child;
  Pose origin;  // joint (= child link) frame in parent link frame
  Vec3 axis = Vec3::UnitZ();
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double velocity = std::numeric_limits<double>::infinity();
  double effort = std::numeric_limits<double>::infinity();
};

}  // namespace

RobotModel load_urdf(const std::string& text, WarningSink* warnings) {
  pt::ptree tree;
  try {
    std::istringstream ss(text);
    pt::read_xml(ss, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw MalformedXml(std::string("XML parse error: ") + e.what());
  }

  auto robot = tree.get_child_optional("robot");
  if (!robot) throw MalformedXml("missing <robot> root element");

  std::map<std::string, UrdfLink> links;
  std::vector<UrdfJoint> joints;

  static const std::set<std::string> known_link_children = {"inertial", "<xmlattr>"};
  static const std::set<std::string> known_joint_children = {"origin", "axis", "limit",
                                                             "parent", "child", "<xmlattr>"};

  for (const auto& [tag, node] : *robot) {
    if (tag == "link") {
      UrdfLink link;
      link.name = node.get<std::string>("<xmlattr>.name", "");
      if (link.name.empty()) throw MalformedXml("link without a name");
      if (auto inertial = node.get_child_optional("inertial")) {
        link.has_inertial = true;
        link.mass = inertial->get<double>("mass.<xmlattr>.value", 0.0);
        link.inertial_origin = parse_origin(*inertial);
        if (auto in = inertial->get_child_optional("inertia.<xmlattr>")) {
          const double ixx = in->get<double>("ixx", 0), iyy = in->get<double>("iyy", 0),
                       izz = in->get<double>("izz", 0), ixy = in->get<double>("ixy", 0),
                       ixz = in->get<double>("ixz", 0), iyz = in->get<double>("iyz", 0);
          link.inertia << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
        }
      }
      for (const auto& [child_tag, child_node] : node) {
        (void)child_node;
        if (!known_link_children.count(child_tag) && warnings) {
          warnings->warn("ignoring <" + child_tag + "> inside link '" + link.name + "'");
        }
      }
      links[link.name] = link;
    } else if (tag == "joint") {
      UrdfJoint j;
      j.name = node.get<std::string>("<xmlattr>.name", "");
      j.type = node.get<std::string>("<xmlattr>.type", "");
      j.parent = node.get<std::string>("parent.<xmlattr>.link", "");
      j.child = node.get<std::string>("child.<xmlattr>.link", "");
      if (j.parent.empty() || j.child.empty()) {
        throw MalformedXml("joint '" + j.name + "' missing parent or child link");
      }
      j.origin = parse_origin(node);
      if (auto s = node.get_optional<std::string>("axis.<xmlattr>.xyz")) {
        j.axis = parse_vec3(*s, "joint axis");
      }
      if (auto lim = node.get_child_optional("limit.<xmlattr>")) {
        if (auto v = lim->get_optional<double>("lower")) j.lower = *v;
        if (auto v = lim->get_optional<double>("upper")) j.upper = *v;
        if (auto v = lim->get_optional<double>("velocity")) j.velocity = *v;
        if (auto v = lim->get_optional<double>("effort")) j.effort = *v;
      }
      for (const auto& [child_tag, child_node] : node) {
        (void)child_node;
        if (!known_joint_children.count(child_tag) && warnings) {
          warnings->warn("ignoring <" + child_tag + "> inside joint '" + j.name + "'");
        }
      }
      if (j.type != "revolute" && j.type != "prismatic" && j.type != "fixed" &&
          j.type != "continuous") {
        throw UnsupportedJointType("joint '" + j.name + "' has unsupported type '" + j.type +
                                   "'");
      }
      joints.push_back(j);
    } else if (tag != "<xmlattr>" && warnings) {
      warnings->warn("ignoring <" + tag + "> inside robot");
    }
  }

  if (links.empty()) throw MalformedXml("no links in URDF");

  // Chain discovery: the root is the unique link that is never a child.
  std::map<std::string, const UrdfJoint*> joint_by_parent;
  std::set<std::string> children;
  for (const auto& j : joints) {
    if (joint_by_parent.count(j.parent)) {
      throw BranchingChain("link '" + j.parent + "' has more than one child joint");
    }
    if (!links.count(j.parent) || !links.count(j.child)) {
      throw MalformedXml("joint '" + j.name + "' references an undefined link");
    }
    joint_by_parent[j.parent] = &j;
    if (!children.insert(j.child).second) {
      throw BranchingChain("link '" + j.child + "' has more than one parent joint");
    }
  }
  std::string root;
  for (const auto& [name, link] : links) {
    (void)link;
    if (!children.count(name)) {
      if (!root.empty()) throw BranchingChain("multiple root links: " + root + ", " + name);
      root = name;
    }
  }
  if (root.empty()) throw BranchingChain("no root link (kinematic loop?)");

  RobotModel model;
  model.base_acceleration = gravity_base_acceleration(Vec3(0, 0, -9.81));

  // Walk the chain, folding fixed joints into the accumulated offset.
  // `carry` is the transform from the previous moving link's COM frame (or the
  // base link frame for the first joint) to the current link frame.
  Pose carry = Pose::Identity();
  std::string current = root;
  while (joint_by_parent.count(current)) {
    const UrdfJoint& j = *joint_by_parent.at(current);
    const UrdfLink& child_link = links.at(j.child);
    if (j.type == "fixed") {
      carry = carry * j.origin;
      current = j.child;
      continue;
    }
    const Pose child_com = child_link.inertial_origin;
    Joint joint;
    joint.name = j.name;
    joint.kind = (j.type == "prismatic") ? JointKind::Prismatic : JointKind::Revolute;
    joint.offset = carry * j.origin * child_com;
    // Screw axis in the joint frame, moved into the child COM frame.
    Vec6 s_joint;
    if (joint.kind == JointKind::Prismatic) {
      s_joint << Vec3::Zero(), j.axis.normalized();
    } else {
      s_joint << j.axis.normalized(), Vec3::Zero();
    }
    joint.axis = ScrewAxis(adjoint(child_com.inverse()) * s_joint);
    if (j.type == "continuous") {
      joint.lower_limit = -std::numeric_limits<double>::infinity();
      joint.upper_limit = std::numeric_limits<double>::infinity();
    } else {
      joint.lower_limit = j.lower;
      joint.upper_limit = j.upper;
    }
    joint.velocity_limit = j.velocity;
    joint.effort_limit = j.effort;

    Link link;
    link.name = child_link.name;
    link.com_frame = child_com;
    if (!child_link.has_inertial || child_link.mass <= 0) {
      throw MalformedXml("moving link '" + child_link.name + "' needs a positive-mass inertial");
    }
    link.inertia = SpatialInertia::FromMassInertia(child_link.mass, child_link.inertia);

    model.joints.push_back(joint);
    model.links.push_back(link);
    carry = child_com.inverse();
    current = j.child;
  }
  return model;
}

RobotModel load_urdf_file(const std::string& path, WarningSink* warnings) {
  std::ifstream in(path);
  if (!in) throw MalformedXml("cannot open URDF file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_urdf(ss.str(), warnings);
}

std::vector<Twist> compute_twists(const RobotModel& model, const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& qd) {
  const int n = model.dof();
  if (q.size() != n || qd.size() != n) {
    throw std::invalid_argument("compute_twists: state dimension mismatch");
  }
  std::vector<Twist> twists(static_cast<size_t>(n));
  Vec6 prev = Vec6::Zero();  // V_0 = 0
  for (int i = 1; i <= n; ++i) {
    const Joint& joint = model.joints[static_cast<size_t>(i - 1)];
    const Mat6 x = adjoint(model.parent_to_child(i, q[i - 1]).inverse());
    Vec6 v = x * prev + joint.axis.axis * qd[i - 1];
    twists[static_cast<size_t>(i - 1)] = Twist(v);
    prev = v;
  }
  return twists;
}

Twist gravity_base_acceleration(const Vec3& g) { return Twist(Vec3::Zero(), -g); }

}  // namespace dynfg
