#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "retarget/kinematics.hpp"
#include "retarget/mlp.hpp"
#include "retarget/pose_data.hpp"
#include "retarget/training.hpp"

namespace retarget {

// Human bank rows paired with their nearest robot bank rows.
struct PairedDataset {
  std::string human_chain;
  std::string robot_chain;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> human_index;
  std::vector<std::uint64_t> robot_index;
  std::vector<double> distances;

  std::size_t size() const noexcept { return human_index.size(); }
  friend bool operator==(const PairedDataset&, const PairedDataset&) = default;
};

inline constexpr std::size_t kDefaultPairCount = 20000;

// Row of `robot` closest to `target` in rotation distance; ties go to the
// lowest index.
std::size_t nearest_robot_row(std::span<const LinkRotationSet> robot_links,
                              const LinkRotationSet& target, double* distance = nullptr);

// For `count` human rows drawn with Rng(derive_seed(seed, i)), scans the whole
// robot bank for the minimum rotation distance. Output order is by i
// regardless of `workers`.
PairedDataset generate_pairs(const PoseBank& human, const PoseBank& robot, std::size_t count,
                             std::uint64_t seed, std::size_t workers = 1);

// Checks indices, chain names and that stored distances match recomputation
// within 1e-6.
void validate_pairs(const PairedDataset& pairs, const PoseBank& human, const PoseBank& robot);

// Binary .pairs file: 128-byte header then one record per pair.
//
//   0  magic "RTGTPAIR"   8  u32 version       12 u32 reserved (0)
//   16 u64 pair count     24 u64 seed
//   32 char[40] human chain name   72 char[40] robot chain name (NUL padded)
//   112 12 reserved bytes          124 u32 CRC-32 of header [0, 124) and payload
//
// Record: u64 human index, u64 robot index, f64 distance.
inline constexpr std::uint32_t kPairsVersion = 1;

std::vector<std::uint8_t> encode_pairs(const PairedDataset& pairs);
PairedDataset decode_pairs(std::span<const std::uint8_t> bytes);
void save_pairs(const PairedDataset& pairs, const std::filesystem::path& path);
PairedDataset load_pairs(const std::filesystem::path& path);

// Supervised stand-in: one MLP from human input straight to joint angles,
// widths [4 J_h, hidden x layers, latent, hidden x layers, J_r].
struct BaselineModel {
  KinematicChain human_chain;
  KinematicChain robot_chain;
  TrainConfig config;
  nn::MlpModel<float> net;
};

BaselineModel make_baseline_model(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, const TrainConfig& config);

// L1 regression onto the paired robot angles with Adam. Only l_rec and total
// are filled in the metrics (both the supervised loss). An epoch is one pass
// over the pairs unless config.steps_per_epoch is set.
std::vector<EpochMetrics> train_baseline(BaselineModel& model, const PairedDataset& pairs,
                                         const PoseBank& human, const PoseBank& robot,
                                         const TrainConfig& config,
                                         const ValidationSet* val = nullptr,
                                         const TrainCallbacks& callbacks = {});

RobotPose baseline_retarget(const BaselineModel& model, const HumanPose& pose);
double baseline_validation_mse(const BaselineModel& model, const ValidationSet& val);

inline constexpr std::uint32_t kBaselineVersion = 1;
std::vector<std::uint8_t> encode_baseline(const BaselineModel& model);
BaselineModel decode_baseline(std::span<const std::uint8_t> bytes);
void save_baseline(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

}  // namespace retarget
