#include "retarget/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "builtin_chains.hpp"
#include "retarget/errors.hpp"

namespace retarget {

namespace {

constexpr std::array<std::string_view, kSemanticLinkCount> kLinkNames = {
    "left_upper_arm", "left_lower_arm", "right_upper_arm", "right_lower_arm"};

std::string_view kind_name(JointKind kind) {
  return kind == JointKind::revolute ? "revolute" : "spherical";
}

Quat local_from_angle(const JointSpec& joint, double angle) {
  return quat_from_axis_angle(joint.axis, angle);
}

template <typename LocalFn>
std::vector<Quat> compose_globals(const KinematicChain& chain, LocalFn&& local) {
  std::vector<Quat> globals;
  globals.reserve(chain.joint_count());
  for (std::size_t j = 0; j < chain.joint_count(); ++j) {
    const JointSpec& joint = chain.joint(j);
    const Quat parent = joint.parent ? globals[*joint.parent] : Quat::identity();
    globals.push_back(parent * joint.rest_rotation * local(j));
  }
  return globals;
}

LinkRotationSet select_links(const KinematicChain& chain, const std::vector<Quat>& globals) {
  LinkRotationSet set;
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    set.rotations[l] = globals[chain.semantic_links()[l]];
  }
  return set;
}

}  // namespace

std::string_view semantic_link_name(SemanticLink link) noexcept {
  return kLinkNames[static_cast<std::size_t>(link)];
}

std::optional<SemanticLink> semantic_link_from_name(std::string_view name) noexcept {
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    if (kLinkNames[l] == name) {
      return static_cast<SemanticLink>(l);
    }
  }
  return std::nullopt;
}

KinematicChain::KinematicChain(std::string name, std::vector<JointSpec> joints,
                               std::array<std::size_t, kSemanticLinkCount> semantic_links)
    : name_(std::move(name)), joints_(std::move(joints)), semantic_links_(semantic_links) {
  if (name_.empty()) {
    throw ValidationError("chain: empty name");
  }
  if (joints_.empty()) {
    throw ValidationError("chain '" + name_ + "': no joints");
  }
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const JointSpec& joint = joints_[j];
    const std::string where = "chain '" + name_ + "' joint " + std::to_string(j) + " ('" +
                              joint.name + "')";
    if (joint.parent && *joint.parent >= j) {
      throw ValidationError(where + ": parent must precede the joint");
    }
    if (!std::isfinite(joint.limits.min) || !std::isfinite(joint.limits.max)) {
      throw ValidationError(where + ": limits must be finite");
    }
    // Equal bounds are allowed and describe a locked joint.
    if (joint.limits.min > joint.limits.max) {
      throw ValidationError(where + ": limits.min exceeds limits.max");
    }
    if (joint.kind == JointKind::revolute) {
      const auto& a = joint.axis;
      const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
      if (std::abs(n - 1.0) > 1e-6) {
        throw ValidationError(where + ": revolute axis must be unit length");
      }
    } else if (joint.limits.min != 0.0 || joint.limits.max > M_PI) {
      throw ValidationError(where + ": spherical limits must be [0, max_swing] with max_swing <= pi");
    }
  }
  std::set<std::size_t> seen;
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    const std::size_t idx = semantic_links_[l];
    if (idx >= joints_.size()) {
      throw ValidationError("chain '" + name_ + "': semantic link " +
                            std::string(kLinkNames[l]) + " points past the joint list");
    }
    if (!seen.insert(idx).second) {
      throw ValidationError("chain '" + name_ + "': semantic links must use distinct joints");
    }
  }
}

KinematicChain KinematicChain::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("chain config: ") + e.what());
  }
  try {
    std::vector<JointSpec> joints;
    for (const auto& j : doc.at("joints")) {
      JointSpec spec;
      spec.name = j.at("name").get<std::string>();
      if (!j.at("parent").is_null()) {
        const auto p = j.at("parent").get<long long>();
        if (p < 0) {
          throw ValidationError("chain config: joint '" + spec.name + "' has negative parent");
        }
        spec.parent = static_cast<std::size_t>(p);
      }
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "revolute") {
        spec.kind = JointKind::revolute;
        spec.axis = j.at("axis").get<Vec3>();
      } else if (kind == "spherical") {
        spec.kind = JointKind::spherical;
      } else {
        throw ValidationError("chain config: unknown joint kind '" + kind + "'");
      }
      const auto limits = j.at("limits").get<std::array<double, 2>>();
      spec.limits = {limits[0], limits[1]};
      if (j.contains("rest_rotation")) {
        const auto r = j.at("rest_rotation").get<std::array<double, 4>>();
        spec.rest_rotation = Quat(r[0], r[1], r[2], r[3]);
      }
      joints.push_back(std::move(spec));
    }
    const auto& links = doc.at("semantic_links");
    if (links.size() != kSemanticLinkCount) {
      throw ValidationError("chain config: semantic_links must have exactly 4 entries");
    }
    std::array<std::size_t, kSemanticLinkCount> link_idx{};
    for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
      link_idx[l] = links.at(std::string(kLinkNames[l])).get<std::size_t>();
    }
    return KinematicChain(doc.at("name").get<std::string>(), std::move(joints), link_idx);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("chain config: ") + e.what());
  }
}

std::string KinematicChain::to_json() const {
  nlohmann::ordered_json doc;
  doc["name"] = name_;
  auto& joints = doc["joints"] = nlohmann::ordered_json::array();
  for (const auto& j : joints_) {
    nlohmann::ordered_json e;
    e["name"] = j.name;
    e["parent"] = j.parent ? nlohmann::ordered_json(*j.parent) : nlohmann::ordered_json(nullptr);
    e["kind"] = kind_name(j.kind);
    if (j.kind == JointKind::revolute) {
      e["axis"] = j.axis;
    }
    e["limits"] = {j.limits.min, j.limits.max};
    e["rest_rotation"] = j.rest_rotation.components();
    joints.push_back(std::move(e));
  }
  auto& links = doc["semantic_links"];
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    links[std::string(kLinkNames[l])] = semantic_links_[l];
  }
  return doc.dump();
}

bool KinematicChain::all_revolute() const noexcept {
  return std::all_of(joints_.begin(), joints_.end(),
                     [](const JointSpec& j) { return j.kind == JointKind::revolute; });
}

bool KinematicChain::all_spherical() const noexcept {
  return std::all_of(joints_.begin(), joints_.end(),
                     [](const JointSpec& j) { return j.kind == JointKind::spherical; });
}

bool KinematicChain::is_ancestor_or_self(std::size_t ancestor, std::size_t joint) const {
  std::optional<std::size_t> cur = joint;
  while (cur) {
    if (*cur == ancestor) {
      return true;
    }
    cur = joints_.at(*cur).parent;
  }
  return false;
}

bool operator==(const KinematicChain& a, const KinematicChain& b) {
  // Serialized form covers every field and compares doubles exactly.
  return a.to_json() == b.to_json();
}

KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open chain config '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return KinematicChain::from_json(buf.str());
}

std::vector<std::string> builtin_chain_names() {
  std::vector<std::string> names;
  for (const auto& entry : detail::kBuiltinChains) {
    names.emplace_back(entry.name);
  }
  return names;
}

KinematicChain builtin_chain(std::string_view name) {
  for (const auto& entry : detail::kBuiltinChains) {
    if (entry.name == name) {
      return KinematicChain::from_json(entry.json);
    }
  }
  throw ValidationError("unknown builtin chain '" + std::string(name) + "'");
}

KinematicChain resolve_chain(std::string_view name_or_path) {
  for (const auto& entry : detail::kBuiltinChains) {
    if (entry.name == name_or_path) {
      return KinematicChain::from_json(entry.json);
    }
  }
  const std::filesystem::path path(name_or_path);
  if (std::filesystem::exists(path)) {
    return load_chain(path);
  }
  std::string known;
  for (const auto& n : builtin_chain_names()) {
    known += (known.empty() ? "" : ", ") + n;
  }
  throw ValidationError("chain '" + std::string(name_or_path) +
                        "' is neither a builtin (" + known + ") nor an existing file");
}

// ---------------------------------------------------------------------------

HumanPose::HumanPose(const KinematicChain& chain, std::vector<Quat> local_rotations)
    : rotations_(std::move(local_rotations)) {
  if (!chain.all_spherical()) {
    throw ValidationError("human pose requires an all-spherical chain, got '" + chain.name() + "'");
  }
  if (rotations_.size() != chain.joint_count()) {
    throw ValidationError("human pose has " + std::to_string(rotations_.size()) +
                          " joints, chain '" + chain.name() + "' has " +
                          std::to_string(chain.joint_count()));
  }
  for (auto& q : rotations_) {
    q = q.canonical();
  }
}

HumanPose HumanPose::from_components(const KinematicChain& chain, std::span<const double> values,
                                     double tolerance) {
  if (values.size() != 4 * chain.joint_count()) {
    throw ValidationError("human pose expects " + std::to_string(4 * chain.joint_count()) +
                          " values, got " + std::to_string(values.size()));
  }
  std::vector<Quat> rotations;
  rotations.reserve(chain.joint_count());
  for (std::size_t j = 0; j < chain.joint_count(); ++j) {
    const double* q = values.data() + 4 * j;
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!std::isfinite(n) || std::abs(n - 1.0) > tolerance) {
      throw ValidationError("joint " + std::to_string(j) + " quaternion has norm " +
                            std::to_string(n) + ", expected 1");
    }
    rotations.emplace_back(q[0], q[1], q[2], q[3]);
  }
  return HumanPose(chain, std::move(rotations));
}

HumanPose HumanPose::rest(const KinematicChain& chain) {
  return HumanPose(chain, std::vector<Quat>(chain.joint_count()));
}

std::vector<double> HumanPose::flatten() const {
  std::vector<double> out;
  out.reserve(4 * rotations_.size());
  for (const auto& q : rotations_) {
    const auto c = q.components();
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

bool HumanPose::within_limits(const KinematicChain& chain, double tolerance) const {
  for (std::size_t j = 0; j < rotations_.size(); ++j) {
    if (rotations_[j].angle() > chain.joint(j).limits.max + tolerance) {
      return false;
    }
  }
  return true;
}

RobotPose::RobotPose(const KinematicChain& chain, std::vector<double> joint_angles)
    : angles_(std::move(joint_angles)) {
  if (!chain.all_revolute()) {
    throw ValidationError("robot pose requires an all-revolute chain, got '" + chain.name() + "'");
  }
  if (angles_.size() != chain.joint_count()) {
    throw ValidationError("robot pose has " + std::to_string(angles_.size()) +
                          " joints, chain '" + chain.name() + "' has " +
                          std::to_string(chain.joint_count()));
  }
  for (std::size_t j = 0; j < angles_.size(); ++j) {
    if (!std::isfinite(angles_[j])) {
      throw ValidationError("robot pose joint " + std::to_string(j) + " is not finite");
    }
    const auto& lim = chain.joint(j).limits;
    angles_[j] = std::clamp(angles_[j], lim.min, lim.max);
  }
}

RobotPose RobotPose::checked(const KinematicChain& chain, std::vector<double> joint_angles,
                             double tolerance) {
  if (joint_angles.size() == chain.joint_count()) {
    for (std::size_t j = 0; j < joint_angles.size(); ++j) {
      const auto& lim = chain.joint(j).limits;
      if (joint_angles[j] < lim.min - tolerance || joint_angles[j] > lim.max + tolerance) {
        throw ValidationError("robot pose joint " + std::to_string(j) + " ('" +
                              chain.joint(j).name + ") angle " + std::to_string(joint_angles[j]) +
                              " outside limits [" + std::to_string(lim.min) + ", " +
                              std::to_string(lim.max) + "]");
      }
    }
  }
  return RobotPose(chain, std::move(joint_angles));
}

RobotPose RobotPose::zero(const KinematicChain& chain) {
  return RobotPose(chain, std::vector<double>(chain.joint_count(), 0.0));
}

std::array<double, 4 * kSemanticLinkCount> LinkRotationSet::flatten() const noexcept {
  std::array<double, 4 * kSemanticLinkCount> out{};
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    const auto c = rotations[l].components();
    std::copy(c.begin(), c.end(), out.begin() + 4 * l);
  }
  return out;
}

LinkRotationSet LinkRotationSet::from_components(std::span<const double> values) {
  if (values.size() != 4 * kSemanticLinkCount) {
    throw ValidationError("link rotation set expects 16 values");
  }
  LinkRotationSet set;
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    const double* q = values.data() + 4 * l;
    set.rotations[l] = Quat(q[0], q[1], q[2], q[3]);
  }
  return set;
}

LinkRotationSet LinkRotationSet::from_components(std::span<const float> values) {
  std::array<double, 4 * kSemanticLinkCount> d{};
  if (values.size() != d.size()) {
    throw ValidationError("link rotation set expects 16 values");
  }
  std::copy(values.begin(), values.end(), d.begin());
  return from_components(std::span<const double>(d));
}

std::vector<Quat> forward_kinematics(const KinematicChain& chain, const HumanPose& pose) {
  if (!chain.all_spherical()) {
    throw ValidationError("human pose applied to non-spherical chain '" + chain.name() + "'");
  }
  if (pose.joint_count() != chain.joint_count()) {
    throw ValidationError("pose/chain length mismatch for chain '" + chain.name() + "'");
  }
  const auto locals = pose.local_rotations();
  return compose_globals(chain, [&](std::size_t j) { return locals[j]; });
}

std::vector<Quat> forward_kinematics(const KinematicChain& chain, const RobotPose& pose) {
  if (!chain.all_revolute()) {
    throw ValidationError("robot pose applied to non-revolute chain '" + chain.name() + "'");
  }
  if (pose.joint_count() != chain.joint_count()) {
    throw ValidationError("pose/chain length mismatch for chain '" + chain.name() + "'");
  }
  const auto angles = pose.joint_angles();
  return compose_globals(chain,
                         [&](std::size_t j) { return local_from_angle(chain.joint(j), angles[j]); });
}

LinkRotationSet semantic_link_rotations(const KinematicChain& chain, const HumanPose& pose) {
  return select_links(chain, forward_kinematics(chain, pose));
}

LinkRotationSet semantic_link_rotations(const KinematicChain& chain, const RobotPose& pose) {
  return select_links(chain, forward_kinematics(chain, pose));
}

double rotation_distance(const LinkRotationSet& a, const LinkRotationSet& b) noexcept {
  double d = 0.0;
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    const double dot = quat_dot(a.rotations[l], b.rotations[l]);
    // Rounding can push |dot| a hair above 1.
    d += std::max(0.0, 1.0 - dot * dot);
  }
  return d;
}

HumanPose human_pose_from_links(const KinematicChain& human_chain, const LinkRotationSet& links) {
  std::vector<Quat> locals(human_chain.joint_count());
  std::vector<Quat> globals;
  globals.reserve(human_chain.joint_count());
  for (std::size_t j = 0; j < human_chain.joint_count(); ++j) {
    const JointSpec& joint = human_chain.joint(j);
    const Quat base =
        (joint.parent ? globals[*joint.parent] : Quat::identity()) * joint.rest_rotation;
    for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
      if (human_chain.semantic_links()[l] == j) {
        locals[j] = base.conjugate() * links.rotations[l];
      }
    }
    globals.push_back(base * locals[j]);
  }
  return HumanPose(human_chain, std::move(locals));
}

}  // namespace retarget
