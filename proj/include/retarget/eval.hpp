#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "retarget/kinematics.hpp"
#include "retarget/pose_data.hpp"
#include "retarget/training.hpp"

namespace retarget {

// ---------------------------------------------------------------------------
// Oracle

inline constexpr std::size_t kOracleRestarts = 32;
inline constexpr double kOracleInitialStep = 0.2;
inline constexpr int kOracleHalvings = 6;

struct OracleResult {
  RobotPose pose;
  double distance = 0.0;  // rotation distance to the target links
};

// Multi-start coordinate descent on the rotation distance. Restart 0 starts
// at the zero pose (clamped into the limits), restart k > 0 at a uniform pose
// drawn from derive_seed(seed, k), so a larger budget always contains the
// restarts of a smaller one. Each restart probes +-step on every joint, from
// 0.2 rad down through 6 halvings.
OracleResult oracle_retarget(const KinematicChain& robot_chain, const LinkRotationSet& target,
                             std::size_t budget = kOracleRestarts, std::uint64_t seed = 0);
OracleResult oracle_retarget(const KinematicChain& robot_chain, const KinematicChain& human_chain,
                             const HumanPose& pose, std::size_t budget = kOracleRestarts,
                             std::uint64_t seed = 0);

// Oracle solutions for many poses, index-ordered. Pose i uses derive_seed(seed, i).
std::vector<OracleResult> oracle_batch(const KinematicChain& robot_chain,
                                       const KinematicChain& human_chain,
                                       std::span<const HumanPose> poses, std::size_t budget,
                                       std::uint64_t seed, std::size_t workers = 1);

// Fresh human poses paired with their oracle solutions.
ValidationSet make_validation_set(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, std::size_t count,
                                  std::uint64_t seed, std::size_t budget = kOracleRestarts,
                                  std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Metrics

// Mean over frames and joints of the squared angle difference. Throws
// ValidationError on chain, length or width mismatch.
double eval_joint_mse(const MotionTrace& predicted, const MotionTrace& reference);

struct SemanticRow {
  double retarget_dgr = 0.0;
  double oracle_dgr = 0.0;
  double random_dgr = 0.0;
  double joint_mse = 0.0;  // retarget vs oracle, mean over joints
};

struct SemanticReport {
  double retarget_mean = 0.0;
  double oracle_mean = 0.0;
  double random_mean = 0.0;
  std::vector<SemanticRow> rows;
  std::vector<RobotPose> retarget_poses;
  std::vector<RobotPose> oracle_poses;
};

// Rotation distances from each human pose to its retarget, its oracle
// solution and a random robot pose (from derive_seed(seed, 2^32 + i)).
SemanticReport eval_semantic(const RetargetModel& model, std::span<const HumanPose> poses,
                             std::size_t budget = kOracleRestarts, std::uint64_t seed = 0,
                             std::size_t workers = 1);

// Fraction of triplets whose latent distances order positive before negative.
using LatentDistanceFn = std::function<double(const SampleRef&, const SampleRef&)>;
double triplet_agreement(std::span<const Triplet> triplets, const LatentDistanceFn& latent_distance);

// Mines n triplets with the model's mining settings from Rng(seed) and
// scores them with the model's encoders.
double eval_triplet_agreement(const RetargetModel& model, const PoseBank& human,
                              const PoseBank& robot, std::size_t n_triplets, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Latency

inline constexpr std::size_t kLatencyWarmup = 100;
inline constexpr std::size_t kLatencyMinPoses = 1000;

struct LatencyReport {
  std::size_t calls = 0;
  double mean_s = 0.0;
  double p99_s = 0.0;
  double khz = 0.0;  // 1 / mean latency in ms
};

// Times n single-pose retarget calls after kLatencyWarmup untimed calls.
// Throws ValidationError when n < kLatencyMinPoses.
LatencyReport bench_latency(const RetargetModel& model, std::size_t n_poses, std::uint64_t seed = 0);
// Same measurement for any single-pose function.
LatencyReport bench_latency(const KinematicChain& human_chain,
                            const std::function<void(const HumanPose&)>& retarget_fn,
                            std::size_t n_poses, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Report

struct EvalReport {
  std::string label;
  std::size_t pose_count = 0;
  double joint_mse = 0.0;
  double semantic_dgr_mean = 0.0;
  double oracle_dgr_mean = 0.0;
  double random_dgr_mean = 0.0;
  double triplet_agreement = 0.0;
  double latency_mean = 0.0;
  double latency_p99 = 0.0;
  double control_frequency = 0.0;  // kHz
  std::vector<SemanticRow> rows;

  std::string to_json() const;
  // One line per pose: index,retarget_dgr,oracle_dgr,random_dgr,joint_mse
  std::string rows_csv() const;
};

struct EvalOptions {
  std::size_t poses = 200;
  std::size_t budget = kOracleRestarts;
  std::size_t triplets = 2000;
  std::size_t latency_calls = 2000;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
};

// Full evaluation on freshly sampled human poses; triplet agreement uses
// banks drawn from the same seed.
EvalReport evaluate(const RetargetModel& model, const EvalOptions& options);

}  // namespace retarget
