#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "retarget/kinematics.hpp"
#include "retarget/rng.hpp"

namespace retarget {

enum class Domain : std::uint32_t { human = 0, robot = 1 };

std::string_view domain_name(Domain domain) noexcept;
Domain parse_domain(std::string_view name);

// Floats per flattened pose row: 4 per joint for human chains, 1 for robot chains.
std::size_t pose_width(const KinematicChain& chain, Domain domain);

// Uniform angle within each joint's limits. Throws ValidationError for chains
// with spherical joints.
RobotPose sample_robot_pose(const KinematicChain& chain, Rng& rng);

// Each joint: uniform axis on the sphere, uniform swing angle in [0, max_swing].
// Throws ValidationError for chains with revolute joints.
HumanPose sample_human_pose(const KinematicChain& chain, Rng& rng);

// Sampled pose dataset with precomputed semantic link rotations (4 links x 4
// components per row). Rows are stored as 32-bit floats, which is also the
// on-disk precision.
struct PoseBank {
  Domain domain = Domain::robot;
  std::string chain_name;
  std::uint32_t joint_count = 0;
  std::uint64_t seed = 0;
  std::vector<float> poses;           // size() rows x width()
  std::vector<float> link_rotations;  // size() rows x 16

  std::size_t width() const noexcept {
    return domain == Domain::human ? 4 * std::size_t{joint_count} : std::size_t{joint_count};
  }
  std::size_t size() const noexcept { return width() == 0 ? 0 : poses.size() / width(); }
  bool empty() const noexcept { return size() == 0; }

  std::span<const float> row(std::size_t i) const { return {poses.data() + i * width(), width()}; }
  std::span<const float> link_row(std::size_t i) const {
    return {link_rotations.data() + i * 16, 16};
  }
  LinkRotationSet links(std::size_t i) const { return LinkRotationSet::from_components(link_row(i)); }

  HumanPose human_pose(const KinematicChain& chain, std::size_t i) const;
  RobotPose robot_pose(const KinematicChain& chain, std::size_t i) const;

  friend bool operator==(const PoseBank&, const PoseBank&) = default;
};

// Row i is drawn from Rng(derive_seed(seed, i)), so the bank bytes depend on
// (chain, domain, count, seed) only, not on `workers`.
PoseBank build_pose_bank(const KinematicChain& chain, Domain domain, std::size_t count,
                         std::uint64_t seed, std::size_t workers = 1);

// Rejects rows that break joint limits, unit norms or the stored link rotations.
void validate_pose_bank(const PoseBank& bank, const KinematicChain& chain);

// Binary .bank file: 64-byte header then little-endian float32 payload.
//
//   0  magic "RTGTBANK"     8  u32 version        12 u32 domain
//   16 u32 joint_count      20 u32 row width      24 u64 row count
//   32 u64 seed             40 char[20] chain name (NUL padded)
//   60 u32 CRC-32 of header bytes [0, 60) followed by the payload
//
// Payload: all pose rows, then all link rotation rows.
inline constexpr std::uint32_t kPoseBankVersion = 1;

void save_pose_bank(const PoseBank& bank, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pose_bank(const PoseBank& bank);
// Throws VersionError, ChecksumError or TruncatedError for damaged files.
PoseBank load_pose_bank(const std::filesystem::path& path);
PoseBank decode_pose_bank(std::span<const std::uint8_t> bytes);

// Time-stamped sequence of flattened poses (same row layout as PoseBank).
struct MotionTrace {
  std::string chain_name;
  double frame_rate = 30.0;
  std::vector<std::vector<double>> frames;

  friend bool operator==(const MotionTrace&, const MotionTrace&) = default;
};

// Checks frame_rate, non-empty frames, row widths and pose validity; errors
// name the offending frame.
void validate_motion_trace(const MotionTrace& trace, const KinematicChain& chain);

MotionTrace make_trace(const KinematicChain& chain, double frame_rate,
                       std::span<const HumanPose> poses);
MotionTrace make_trace(const KinematicChain& chain, double frame_rate,
                       std::span<const RobotPose> poses);
std::vector<HumanPose> trace_human_poses(const MotionTrace& trace, const KinematicChain& chain);
std::vector<RobotPose> trace_robot_poses(const MotionTrace& trace, const KinematicChain& chain);

// JSON-lines .trace: header {"chain", "frame_rate", "crc32"} then one JSON
// array per frame. crc32 covers the chain name, the frame rate bits and every
// byte after the header line; files written by other tools may omit it.
std::string encode_motion_trace(const MotionTrace& trace);
MotionTrace decode_motion_trace(std::string_view text);
void save_motion_trace(const MotionTrace& trace, const std::filesystem::path& path);
MotionTrace load_motion_trace(const std::filesystem::path& path, const KinematicChain& chain);
// Resolves the chain from the header through the builtin registry.
MotionTrace load_motion_trace(const std::filesystem::path& path);

}  // namespace retarget
