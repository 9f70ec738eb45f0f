#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retarget/quat.hpp"

namespace retarget {

enum class JointKind { spherical, revolute };

// Revolute joints: angle range in radians. Spherical joints: min is 0 and max
// is the largest swing angle away from the rest rotation.
struct JointLimits {
  double min = 0.0;
  double max = 0.0;
};

struct JointSpec {
  std::string name;
  std::optional<std::size_t> parent;
  JointKind kind = JointKind::spherical;
  Vec3 axis{0.0, 0.0, 1.0};  // revolute only
  JointLimits limits;
  Quat rest_rotation;
};

// The four arm links compared across domains.
enum class SemanticLink : std::size_t {
  left_upper_arm = 0,
  left_lower_arm = 1,
  right_upper_arm = 2,
  right_lower_arm = 3,
};

inline constexpr std::size_t kSemanticLinkCount = 4;

std::string_view semantic_link_name(SemanticLink link) noexcept;
std::optional<SemanticLink> semantic_link_from_name(std::string_view name) noexcept;

// Joint forest in topological order plus the joint index whose global
// rotation stands for each semantic link. Immutable once constructed.
class KinematicChain {
 public:
  // Throws ValidationError when any structural invariant fails.
  KinematicChain(std::string name, std::vector<JointSpec> joints,
                 std::array<std::size_t, kSemanticLinkCount> semantic_links);

  static KinematicChain from_json(std::string_view text);
  std::string to_json() const;

  const std::string& name() const noexcept { return name_; }
  std::span<const JointSpec> joints() const noexcept { return joints_; }
  const JointSpec& joint(std::size_t i) const { return joints_.at(i); }
  std::size_t joint_count() const noexcept { return joints_.size(); }
  const std::array<std::size_t, kSemanticLinkCount>& semantic_links() const noexcept {
    return semantic_links_;
  }
  std::size_t link_joint(SemanticLink link) const noexcept {
    return semantic_links_[static_cast<std::size_t>(link)];
  }

  bool all_revolute() const noexcept;
  bool all_spherical() const noexcept;
  // True when `ancestor` lies on the path from `joint` to its root (inclusive).
  bool is_ancestor_or_self(std::size_t ancestor, std::size_t joint) const;

  friend bool operator==(const KinematicChain& a, const KinematicChain& b);

 private:
  std::string name_;
  std::vector<JointSpec> joints_;
  std::array<std::size_t, kSemanticLinkCount> semantic_links_;
};

KinematicChain load_chain(const std::filesystem::path& path);

// Chains shipped with the library: human-upper-14, toy-robot-8, tiago-like-14.
std::vector<std::string> builtin_chain_names();
KinematicChain builtin_chain(std::string_view name);

// Builtin name, or else a path to a chain JSON file.
KinematicChain resolve_chain(std::string_view name_or_path);

// Per-joint parent-relative unit quaternions, canonicalized to w >= 0.
class HumanPose {
 public:
  // Throws ValidationError on length mismatch or non-spherical chains.
  HumanPose(const KinematicChain& chain, std::vector<Quat> local_rotations);

  // Flattened w,x,y,z per joint. Each quaternion must already be unit length
  // within `tolerance`; it is then renormalized.
  static HumanPose from_components(const KinematicChain& chain, std::span<const double> values,
                                   double tolerance = 1e-6);
  static HumanPose rest(const KinematicChain& chain);

  std::span<const Quat> local_rotations() const noexcept { return rotations_; }
  std::size_t joint_count() const noexcept { return rotations_.size(); }
  std::vector<double> flatten() const;

  // Every local rotation within its joint's swing limit (plus `tolerance`).
  bool within_limits(const KinematicChain& chain, double tolerance = 1e-6) const;

  friend bool operator==(const HumanPose&, const HumanPose&) = default;

 private:
  std::vector<Quat> rotations_;
};

// Joint angles in radians, clamped into the joint limits on construction.
class RobotPose {
 public:
  // Throws ValidationError on length mismatch, non-finite angles or chains
  // with spherical joints.
  RobotPose(const KinematicChain& chain, std::vector<double> joint_angles);

  // Rejects out-of-limit angles instead of clamping.
  static RobotPose checked(const KinematicChain& chain, std::vector<double> joint_angles,
                           double tolerance = 1e-6);
  static RobotPose zero(const KinematicChain& chain);

  std::span<const double> joint_angles() const noexcept { return angles_; }
  double operator[](std::size_t i) const { return angles_.at(i); }
  std::size_t joint_count() const noexcept { return angles_.size(); }

  friend bool operator==(const RobotPose&, const RobotPose&) = default;

 private:
  RobotPose() = default;
  std::vector<double> angles_;
};

struct LinkRotationSet {
  std::array<Quat, kSemanticLinkCount> rotations;

  const Quat& operator[](SemanticLink link) const noexcept {
    return rotations[static_cast<std::size_t>(link)];
  }
  std::array<double, 4 * kSemanticLinkCount> flatten() const noexcept;
  static LinkRotationSet from_components(std::span<const double> values);
  static LinkRotationSet from_components(std::span<const float> values);
};

// global[j] = global[parent(j)] * rest[j] * local[j]; roots use the identity.
std::vector<Quat> forward_kinematics(const KinematicChain& chain, const HumanPose& pose);
std::vector<Quat> forward_kinematics(const KinematicChain& chain, const RobotPose& pose);

LinkRotationSet semantic_link_rotations(const KinematicChain& chain, const HumanPose& pose);
LinkRotationSet semantic_link_rotations(const KinematicChain& chain, const RobotPose& pose);

// Sum over the four links of 1 - <a_j, b_j>^2. Always in [0, 4].
double rotation_distance(const LinkRotationSet& a, const LinkRotationSet& b) noexcept;

// Human pose realizing the given link rotations: link joints take whatever
// local rotation reaches their target, every other joint stays at rest.
HumanPose human_pose_from_links(const KinematicChain& human_chain, const LinkRotationSet& links);

}  // namespace retarget
