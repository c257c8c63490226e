#include "reflexgrasp/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "reflexgrasp/errors.hpp"

#ifndef REFLEXGRASP_DATA_DIR
#define REFLEXGRASP_DATA_DIR "data"
#endif

namespace reflex {

using nlohmann::json;

VectorXd RobotModel::q_min() const {
  VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].lower;
  return v;
}

VectorXd RobotModel::q_max() const {
  VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].upper;
  return v;
}

VectorXd RobotModel::qd_min() const {
  VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = -joints[i].velocity;
  return v;
}

VectorXd RobotModel::qd_max() const {
  VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints[i].velocity;
  return v;
}

bool RobotModel::is_ancestor(int j, int link) const {
  for (int k = link; k >= 0; k = joints[k].parent) {
    if (k == j) return true;
  }
  return false;
}

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::Config, field + ": " + msg);
}

bool is_unit(const Vector3d& v) { return std::abs(v.norm() - 1.0) < 1e-6; }

}  // namespace

void RobotModel::validate() const {
  if (joints.empty()) config_error("joints", "at least one joint is required");
  for (int i = 0; i < dof(); ++i) {
    const Joint& jt = joints[i];
    const std::string f = "joints[" + std::to_string(i) + "]";
    if (jt.parent >= i || jt.parent < -1) config_error(f + ".parent", "must name an earlier joint");
    if (!is_unit(jt.axis)) config_error(f + ".axis", "must be a unit vector");
    if (!(jt.lower < jt.upper)) config_error(f + ".limits", "lower must be below upper");
    if (!(jt.velocity > 0.0)) config_error(f + ".limits.velocity", "must be positive");
  }
  if (fingertips.empty()) config_error("fingertips", "at least one fingertip is required");
  for (std::size_t i = 0; i < fingertips.size(); ++i) {
    const Fingertip& t = fingertips[i];
    const std::string f = "fingertips[" + std::to_string(i) + "]";
    if (t.joint < 0 || t.joint >= dof()) config_error(f + ".joint", "unknown joint");
    if (!(t.radius > 0.0)) config_error(f + ".radius", "must be positive");
    if (!is_unit(t.reference_direction)) config_error(f + ".reference_direction", "must be a unit vector");
  }
  for (std::size_t i = 0; i < geoms.size(); ++i) {
    const Geom& g = geoms[i];
    const std::string f = "geoms[" + std::to_string(i) + "]";
    if (g.link < -1 || g.link >= dof()) config_error(f + ".link", "unknown link");
    if (g.type == GeomType::HalfSpace) {
      if (g.link != -1) config_error(f + ".link", "half-spaces must be attached to the world");
      if (!is_unit(g.normal)) config_error(f + ".normal", "must be a unit vector");
    } else if (!(g.radius > 0.0)) {
      config_error(f + ".radius", "must be positive");
    }
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string f = "collision_pairs[" + std::to_string(i) + "]";
    const int n = static_cast<int>(geoms.size());
    if (p.a < 0 || p.a >= n || p.b < 0 || p.b >= n || p.a == p.b) config_error(f, "must name two distinct geoms");
    if (geoms[p.a].type == GeomType::HalfSpace && geoms[p.b].type == GeomType::HalfSpace) {
      config_error(f, "half-space against half-space is not supported");
    }
  }
  if (home.size() != dof()) config_error("home", "length must equal the number of joints");
}

// -- JSON ---------------------------------------------------------------------

namespace {

Vector3d vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) config_error(field, "expected an array of 3 numbers");
  Vector3d v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) config_error(field, "expected an array of 3 numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

double number(const json& obj, const char* key, const std::string& field) {
  if (!obj.contains(key) || !obj[key].is_number()) config_error(field + "." + key, "expected a number");
  return obj[key].get<double>();
}

std::string string_field(const json& obj, const char* key, const std::string& field) {
  if (!obj.contains(key) || !obj[key].is_string()) config_error(field + "." + key, "expected a string");
  return obj[key].get<std::string>();
}

json to_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Isometry3d origin_from_json(const json& j, const std::string& field) {
  Isometry3d t = Isometry3d::Identity();
  if (j.is_null()) return t;
  if (!j.is_object()) config_error(field, "expected an object with xyz and rpy");
  Vector3d rpy = Vector3d::Zero();
  if (j.contains("xyz")) t.translation() = vec3(j["xyz"], field + ".xyz");
  if (j.contains("rpy")) rpy = vec3(j["rpy"], field + ".rpy");
  t.linear() = (Eigen::AngleAxisd(rpy.z(), Vector3d::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vector3d::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), Vector3d::UnitX()))
                   .toRotationMatrix();
  return t;
}

json origin_to_json(const Isometry3d& t) {
  const Matrix3d r = t.linear();
  // Z-Y-X Euler angles, inverse of origin_from_json.
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {{"xyz", to_json(t.translation())}, {"rpy", json::array({roll, pitch, yaw})}};
}

}  // namespace

RobotModel robot_from_json(const json& j) {
  if (!j.is_object()) config_error("robot", "expected a JSON object");
  if (!j.contains("schema") || j["schema"] != 1) config_error("schema", "expected schema 1");
  if (!j.contains("joints") || !j["joints"].is_array()) config_error("joints", "expected an array");

  RobotModel m;
  std::map<std::string, int> joint_index;
  for (std::size_t i = 0; i < j["joints"].size(); ++i) {
    const json& jj = j["joints"][i];
    const std::string f = "joints[" + std::to_string(i) + "]";
    if (!jj.is_object()) config_error(f, "expected an object");
    Joint jt;
    jt.name = string_field(jj, "name", f);
    if (joint_index.count(jt.name)) config_error(f + ".name", "duplicate joint name");
    const std::string type = string_field(jj, "type", f);
    if (type == "revolute") {
      jt.type = JointType::Revolute;
    } else if (type == "prismatic") {
      jt.type = JointType::Prismatic;
    } else {
      config_error(f + ".type", "expected revolute or prismatic");
    }
    if (jj.contains("parent") && !jj["parent"].is_null()) {
      if (!jj["parent"].is_string()) config_error(f + ".parent", "expected a joint name or null");
      const auto it = joint_index.find(jj["parent"].get<std::string>());
      if (it == joint_index.end()) config_error(f + ".parent", "must name an earlier joint");
      jt.parent = it->second;
    }
    jt.origin = origin_from_json(jj.value("origin", json()), f + ".origin");
    if (!jj.contains("axis")) config_error(f + ".axis", "missing");
    jt.axis = vec3(jj["axis"], f + ".axis");
    if (!jj.contains("limits") || !jj["limits"].is_object()) config_error(f + ".limits", "expected an object");
    jt.lower = number(jj["limits"], "lower", f + ".limits");
    jt.upper = number(jj["limits"], "upper", f + ".limits");
    jt.velocity = number(jj["limits"], "velocity", f + ".limits");
    joint_index[jt.name] = static_cast<int>(m.joints.size());
    m.joints.push_back(jt);
  }

  auto link_of = [&](const json& obj, const char* key, const std::string& f) {
    const std::string name = string_field(obj, key, f);
    if (name == "world") return -1;
    const auto it = joint_index.find(name);
    if (it == joint_index.end()) config_error(f + "." + key, "unknown joint '" + name + "'");
    return it->second;
  };

  if (!j.contains("fingertips") || !j["fingertips"].is_array()) config_error("fingertips", "expected an array");
  for (std::size_t i = 0; i < j["fingertips"].size(); ++i) {
    const json& tj = j["fingertips"][i];
    const std::string f = "fingertips[" + std::to_string(i) + "]";
    Fingertip t;
    t.name = string_field(tj, "name", f);
    t.joint = link_of(tj, "joint", f);
    if (t.joint < 0) config_error(f + ".joint", "fingertips must be attached to a joint");
    if (!tj.contains("offset")) config_error(f + ".offset", "missing");
    t.offset = vec3(tj["offset"], f + ".offset");
    t.radius = number(tj, "radius", f);
    if (!tj.contains("reference_direction")) config_error(f + ".reference_direction", "missing");
    t.reference_direction = vec3(tj["reference_direction"], f + ".reference_direction");
    m.fingertips.push_back(t);
  }

  std::map<std::string, int> geom_index;
  if (j.contains("geoms")) {
    if (!j["geoms"].is_array()) config_error("geoms", "expected an array");
    for (std::size_t i = 0; i < j["geoms"].size(); ++i) {
      const json& gj = j["geoms"][i];
      const std::string f = "geoms[" + std::to_string(i) + "]";
      Geom g;
      g.name = string_field(gj, "name", f);
      if (geom_index.count(g.name)) config_error(f + ".name", "duplicate geom name");
      const std::string type = string_field(gj, "type", f);
      if (type == "sphere") {
        g.type = GeomType::Sphere;
        g.link = link_of(gj, "link", f);
        g.p0 = g.p1 = vec3(gj.value("center", json()), f + ".center");
        g.radius = number(gj, "radius", f);
      } else if (type == "capsule") {
        g.type = GeomType::Capsule;
        g.link = link_of(gj, "link", f);
        g.p0 = vec3(gj.value("p0", json()), f + ".p0");
        g.p1 = vec3(gj.value("p1", json()), f + ".p1");
        g.radius = number(gj, "radius", f);
      } else if (type == "halfspace") {
        g.type = GeomType::HalfSpace;
        g.link = -1;
        g.normal = vec3(gj.value("normal", json()), f + ".normal");
        g.offset = number(gj, "offset", f);
      } else {
        config_error(f + ".type", "expected sphere, capsule or halfspace");
      }
      geom_index[g.name] = static_cast<int>(m.geoms.size());
      m.geoms.push_back(g);
    }
  }

  if (j.contains("collision_pairs")) {
    if (!j["collision_pairs"].is_array()) config_error("collision_pairs", "expected an array");
    for (std::size_t i = 0; i < j["collision_pairs"].size(); ++i) {
      const json& pj = j["collision_pairs"][i];
      const std::string f = "collision_pairs[" + std::to_string(i) + "]";
      if (!pj.is_array() || pj.size() != 2 || !pj[0].is_string() || !pj[1].is_string()) {
        config_error(f, "expected a pair of geom names");
      }
      const auto a = geom_index.find(pj[0].get<std::string>());
      const auto b = geom_index.find(pj[1].get<std::string>());
      if (a == geom_index.end() || b == geom_index.end()) config_error(f, "unknown geom name");
      m.pairs.push_back({a->second, b->second});
    }
  }

  if (j.contains("home")) {
    if (!j["home"].is_array()) config_error("home", "expected an array of numbers");
    m.home.resize(static_cast<Eigen::Index>(j["home"].size()));
    for (std::size_t i = 0; i < j["home"].size(); ++i) {
      if (!j["home"][i].is_number()) config_error("home[" + std::to_string(i) + "]", "expected a number");
      m.home[static_cast<Eigen::Index>(i)] = j["home"][i].get<double>();
    }
  } else {
    m.home = VectorXd::Zero(m.dof());
  }

  m.validate();
  return m;
}

json robot_to_json(const RobotModel& m) {
  json j;
  j["schema"] = 1;
  auto link_name = [&](int link) { return link < 0 ? std::string("world") : m.joints[link].name; };
  j["joints"] = json::array();
  for (const Joint& jt : m.joints) {
    j["joints"].push_back({{"name", jt.name},
                           {"type", jt.type == JointType::Revolute ? "revolute" : "prismatic"},
                           {"parent", jt.parent < 0 ? json() : json(m.joints[jt.parent].name)},
                           {"origin", origin_to_json(jt.origin)},
                           {"axis", to_json(jt.axis)},
                           {"limits", {{"lower", jt.lower}, {"upper", jt.upper}, {"velocity", jt.velocity}}}});
  }
  j["fingertips"] = json::array();
  for (const Fingertip& t : m.fingertips) {
    j["fingertips"].push_back({{"name", t.name},
                               {"joint", link_name(t.joint)},
                               {"offset", to_json(t.offset)},
                               {"radius", t.radius},
                               {"reference_direction", to_json(t.reference_direction)}});
  }
  j["geoms"] = json::array();
  for (const Geom& g : m.geoms) {
    json gj = {{"name", g.name}};
    switch (g.type) {
      case GeomType::Sphere:
        gj.update({{"type", "sphere"}, {"link", link_name(g.link)}, {"center", to_json(g.p0)}, {"radius", g.radius}});
        break;
      case GeomType::Capsule:
        gj.update({{"type", "capsule"},
                   {"link", link_name(g.link)},
                   {"p0", to_json(g.p0)},
                   {"p1", to_json(g.p1)},
                   {"radius", g.radius}});
        break;
      case GeomType::HalfSpace:
        gj.update({{"type", "halfspace"}, {"normal", to_json(g.normal)}, {"offset", g.offset}});
        break;
    }
    j["geoms"].push_back(gj);
  }
  j["collision_pairs"] = json::array();
  for (const auto& p : m.pairs) j["collision_pairs"].push_back({m.geoms[p.a].name, m.geoms[p.b].name});
  j["home"] = std::vector<double>(m.home.data(), m.home.data() + m.home.size());
  return j;
}

RobotModel load_robot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open robot file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  return robot_from_json(j);
}

std::string default_robot_path() { return std::string(REFLEXGRASP_DATA_DIR) + "/robot_15dof.json"; }

RobotModel default_robot() { return load_robot(default_robot_path()); }

// -- Kinematics -----------------------------------------------------------------

KinematicState forward_kinematics(const RobotModel& m, const VectorXd& q) {
  if (q.size() != m.dof()) throw Error(ErrorKind::InvalidArgument, "q has the wrong dimension");
  KinematicState ks;
  ks.q = q;
  ks.frames.resize(m.joints.size());
  for (int i = 0; i < m.dof(); ++i) {
    const Joint& jt = m.joints[i];
    Isometry3d motion = Isometry3d::Identity();
    if (jt.type == JointType::Revolute) {
      motion.linear() = Eigen::AngleAxisd(q[i], jt.axis).toRotationMatrix();
    } else {
      motion.translation() = q[i] * jt.axis;
    }
    const Isometry3d parent = jt.parent < 0 ? Isometry3d::Identity() : ks.frames[jt.parent];
    ks.frames[i] = parent * jt.origin * motion;
  }
  for (const Fingertip& t : m.fingertips) {
    TipKinematics tk;
    tk.x = ks.frames[t.joint] * t.offset;
    tk.R = ks.frames[t.joint].linear();
    tk.Jx = point_jacobian(m, ks, t.joint, tk.x);
    tk.JR = MatrixXd::Zero(3, m.dof());
    for (int j = t.joint; j >= 0; j = m.joints[j].parent) {
      if (m.joints[j].type == JointType::Revolute) tk.JR.col(j) = ks.frames[j].linear() * m.joints[j].axis;
    }
    ks.tips.push_back(std::move(tk));
  }
  return ks;
}

MatrixXd point_jacobian(const RobotModel& m, const KinematicState& ks, int link, const Vector3d& p) {
  MatrixXd J = MatrixXd::Zero(3, m.dof());
  for (int j = link; j >= 0; j = m.joints[j].parent) {
    const Vector3d axis = ks.frames[j].linear() * m.joints[j].axis;
    if (m.joints[j].type == JointType::Revolute) {
      J.col(j) = axis.cross(p - ks.frames[j].translation());
    } else {
      J.col(j) = axis;
    }
  }
  return J;
}

// -- Collision ------------------------------------------------------------------

void closest_points_segments(const Vector3d& p0, const Vector3d& p1, const Vector3d& q0,
                             const Vector3d& q1, Vector3d* on_p, Vector3d* on_q) {
  const Vector3d d1 = p1 - p0;
  const Vector3d d2 = q1 - q0;
  const Vector3d r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  constexpr double eps = 1e-14;
  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) {
    s = t = 0.0;
  } else if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  *on_p = p0 + s * d1;
  *on_q = q0 + t * d2;
}

namespace {

struct WorldSegment {
  Vector3d p0, p1;
};

WorldSegment world_segment(const Geom& g, const KinematicState& ks) {
  if (g.link < 0) return {g.p0, g.p1};
  const Isometry3d& T = ks.frames[g.link];
  return {T * g.p0, T * g.p1};
}

MatrixXd attached_jacobian(const RobotModel& m, const KinematicState& ks, int link, const Vector3d& p) {
  if (link < 0) return MatrixXd::Zero(3, m.dof());
  return point_jacobian(m, ks, link, p);
}

}  // namespace

CollisionValues collision_values(const RobotModel& m, const KinematicState& ks) {
  const int k = static_cast<int>(m.pairs.size());
  CollisionValues out{VectorXd::Zero(k), MatrixXd::Zero(k, m.dof())};
  for (int i = 0; i < k; ++i) {
    const Geom* a = &m.geoms[m.pairs[i].a];
    const Geom* b = &m.geoms[m.pairs[i].b];
    if (a->type == GeomType::HalfSpace) std::swap(a, b);
    const WorldSegment sa = world_segment(*a, ks);
    if (b->type == GeomType::HalfSpace) {
      // Lowest endpoint of the capsule core against the plane; ties pick p0.
      const double h0 = b->normal.dot(sa.p0) - b->offset;
      const double h1 = b->normal.dot(sa.p1) - b->offset;
      const Vector3d w = h1 < h0 ? sa.p1 : sa.p0;
      out.gamma[i] = std::min(h0, h1) - a->radius;
      out.jac.row(i) = b->normal.transpose() * attached_jacobian(m, ks, a->link, w);
      continue;
    }
    const WorldSegment sb = world_segment(*b, ks);
    Vector3d wa, wb;
    closest_points_segments(sa.p0, sa.p1, sb.p0, sb.p1, &wa, &wb);
    const Vector3d diff = wa - wb;
    const double dist = diff.norm();
    out.gamma[i] = dist - a->radius - b->radius;
    if (dist > 1e-12) {
      const Vector3d u = diff / dist;
      out.jac.row(i) =
          u.transpose() * (attached_jacobian(m, ks, a->link, wa) - attached_jacobian(m, ks, b->link, wb));
    }
  }
  return out;
}

CollisionValues collision_values(const RobotModel& m, const VectorXd& q) {
  return collision_values(m, forward_kinematics(m, q));
}

}  // namespace reflex
