#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "json.hpp"

namespace reflex {

using Eigen::Isometry3d;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

enum class JointType { Revolute, Prismatic };

struct Joint {
  std::string name;
  JointType type = JointType::Revolute;
  int parent = -1;                            // index of the parent joint, -1 for the world
  Isometry3d origin = Isometry3d::Identity();  // joint frame in the parent frame at q = 0
  Vector3d axis = Vector3d::UnitZ();           // unit, in the joint frame
  double lower = -1.0, upper = 1.0;            // position limits
  double velocity = 1.0;                       // symmetric speed limit
};

struct Fingertip {
  std::string name;
  int joint = -1;            // link the tip sphere is attached to
  Vector3d offset;           // sphere centre in that joint frame
  double radius = 0.01;
  Vector3d reference_direction = Vector3d::UnitX();  // r_local, unit, tip frame
};

enum class GeomType { Sphere, Capsule, HalfSpace };

/// Sphere and capsule geoms are attached to a joint frame (or the world when
/// link = -1). A sphere is a capsule with p0 = p1. A half-space is the free
/// region {x : normal . x >= offset} of a world obstacle.
struct Geom {
  std::string name;
  GeomType type = GeomType::Sphere;
  int link = -1;
  Vector3d p0 = Vector3d::Zero(), p1 = Vector3d::Zero();
  double radius = 0.0;
  Vector3d normal = Vector3d::UnitZ();
  double offset = 0.0;
};

struct CollisionPair {
  int a, b;
};

class RobotModel {
 public:
  std::vector<Joint> joints;
  std::vector<Fingertip> fingertips;
  std::vector<Geom> geoms;
  std::vector<CollisionPair> pairs;
  VectorXd home;

  int dof() const { return static_cast<int>(joints.size()); }
  VectorXd q_min() const;
  VectorXd q_max() const;
  VectorXd qd_min() const;
  VectorXd qd_max() const;

  /// True when joint j lies on the path from the world to joint `link`.
  bool is_ancestor(int j, int link) const;

  /// Throws Error(Config) naming the offending field.
  void validate() const;
};

RobotModel robot_from_json(const nlohmann::json& j);
nlohmann::json robot_to_json(const RobotModel& m);
RobotModel load_robot(const std::string& path);

/// The shipped 15-DoF arm and two-finger hand.
RobotModel default_robot();
std::string default_robot_path();

struct TipKinematics {
  Vector3d x;
  Matrix3d R;
  MatrixXd Jx;  // 3 x n
  MatrixXd JR;  // 3 x n, world-frame angular velocity
};

struct KinematicState {
  VectorXd q;
  std::vector<Isometry3d> frames;  // world pose of every joint frame
  std::vector<TipKinematics> tips;
};

KinematicState forward_kinematics(const RobotModel& m, const VectorXd& q);

/// Linear Jacobian of a world point rigidly attached to joint frame `link`.
MatrixXd point_jacobian(const RobotModel& m, const KinematicState& ks, int link, const Vector3d& p);

struct CollisionValues {
  VectorXd gamma;  // k
  MatrixXd jac;    // k x n
};

CollisionValues collision_values(const RobotModel& m, const KinematicState& ks);
CollisionValues collision_values(const RobotModel& m, const VectorXd& q);

/// Closest points between segments [p0, p1] and [q0, q1].
void closest_points_segments(const Vector3d& p0, const Vector3d& p1, const Vector3d& q0,
                             const Vector3d& q1, Vector3d* on_p, Vector3d* on_q);

}  // namespace reflex
