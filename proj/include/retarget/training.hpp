#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "retarget/kinematics.hpp"
#include "retarget/mlp.hpp"
#include "retarget/pose_data.hpp"

namespace retarget {

inline constexpr std::size_t kDefaultLatentDim = 8;
inline constexpr std::size_t kDefaultHiddenWidth = 128;
inline constexpr std::size_t kDefaultHiddenLayers = 6;

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch = 256;
  double alpha = 0.05;
  double lambda_triplet = 10.0;
  double lambda_rec = 5.0;
  double lambda_ltc = 1.0;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
  double cross_domain_fraction = 0.5;
  double separation_delta = 0.1;
  // Local triplets take each candidate as the nearest of candidate_pool
  // uniform draws; pool 1 disables them.
  double local_fraction = 1.0;
  std::size_t candidate_pool = 64;
  // 0 means one pass over the robot bank per epoch.
  std::size_t steps_per_epoch = 0;
  std::size_t latent_dim = kDefaultLatentDim;
  std::size_t hidden_width = kDefaultHiddenWidth;
  std::size_t hidden_layers = kDefaultHiddenLayers;

  // Loss weights may be zero (ablations); everything else must be positive.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(std::string_view text);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Q_h, Q_r and D. The decoder squashes into the robot joint limits.
template <typename Scalar>
struct RetargetNetworks {
  nn::MlpModel<Scalar> encoder_h;
  nn::MlpModel<Scalar> encoder_r;
  nn::MlpModel<Scalar> decoder;

  std::size_t latent_dim() const { return encoder_h.output_dim(); }
  void validate() const;
};

// Encoder/decoder widths: [input, hidden x layers, latent] and
// [latent, hidden x layers, robot joints].
template <typename Scalar>
RetargetNetworks<Scalar> make_networks(std::size_t human_input, const nn::SquashLimits& robot_limits,
                                       std::size_t latent_dim, std::size_t hidden_width,
                                       std::size_t hidden_layers, std::uint64_t seed);

nn::SquashLimits joint_limits(const KinematicChain& robot_chain);

struct RetargetModel {
  KinematicChain human_chain;
  KinematicChain robot_chain;
  TrainConfig config;
  RetargetNetworks<float> nets;
};

// Fresh model sized from the chains and config, initialized from config.seed.
RetargetModel make_retarget_model(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Triplet mining

struct SampleRef {
  Domain domain = Domain::robot;
  std::size_t index = 0;
  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct Triplet {
  SampleRef anchor;
  SampleRef positive;
  SampleRef negative;
  double d_pos = 0.0;
  double d_neg = 0.0;
};

// Draws `count` triplets. The first ceil(cross_domain_fraction * count) take
// both candidates from the domain opposite the anchor; the rest draw each
// candidate's domain at random. Candidate pairs closer than
// separation_delta in rotation distance are redrawn up to 16 times, then the
// triplet is dropped. Throws ValidationError when no triplet can be formed.
std::vector<Triplet> mine_triplets(const PoseBank& human, const PoseBank& robot, std::size_t count,
                                   const TrainConfig& config, Rng& rng);

// Tuning knob for tests: number of redraws before a triplet is dropped.
inline constexpr int kTripletRetries = 16;

// ---------------------------------------------------------------------------
// Losses

// max(|z_o - z_p| - |z_o - z_n| + alpha, 0)
double triplet_loss(std::span<const double> z_o, std::span<const double> z_p,
                    std::span<const double> z_n, double alpha);

struct LossBreakdown {
  double triplet = 0.0;
  double rec = 0.0;
  double ltc = 0.0;
  double total = 0.0;
};

// lambda_triplet * triplet + lambda_rec * rec + lambda_ltc * ltc
double combine_losses(double triplet, double rec, double ltc, const TrainConfig& config);

// One optimization batch in network-input form.
template <typename Scalar>
struct LossBatch {
  struct Item {
    Domain domain;
    Eigen::Index row;  // row in triplet_human or triplet_robot
  };
  nn::Matrix<Scalar> triplet_human;
  nn::Matrix<Scalar> triplet_robot;
  std::vector<std::array<Item, 3>> triplets;  // anchor, positive, negative
  nn::Matrix<Scalar> rec_robot;
  nn::Matrix<Scalar> ltc_human;
};

template <typename Scalar>
struct NetworkGradients {
  nn::GradientSet<Scalar> encoder_h;
  nn::GradientSet<Scalar> encoder_r;
  nn::GradientSet<Scalar> decoder;

  static NetworkGradients zeros_like(const RetargetNetworks<Scalar>& nets);
  bool all_finite() const;
};

// Triplet loss is averaged over triplets; reconstruction and latent
// consistency are L1 norms per sample averaged over the batch. Empty parts
// contribute zero. Gradients are accumulated into `grads` when non-null.
template <typename Scalar>
LossBreakdown total_loss(const RetargetNetworks<Scalar>& nets, const LossBatch<Scalar>& batch,
                         const TrainConfig& config, NetworkGradients<Scalar>* grads = nullptr);

// Batch inputs assembled from bank rows.
LossBatch<float> make_loss_batch(const PoseBank& human, const PoseBank& robot,
                                 std::span<const Triplet> triplets,
                                 std::span<const std::size_t> robot_rows,
                                 std::span<const std::size_t> human_rows);

// |x_r - D(Q_r(x_r))|_1
double reconstruction_loss(const RetargetModel& model, const RobotPose& pose);
// |Q_h(x_h) - Q_r(D(Q_h(x_h)))|_1
double latent_consistency_loss(const RetargetModel& model, const HumanPose& pose);
// Mean of the two above over bank rows.
double mean_reconstruction_loss(const RetargetModel& model, const PoseBank& robot);
double mean_latent_consistency_loss(const RetargetModel& model, const PoseBank& human);

// Network inputs for a pose (quaternion components or joint angles).
nn::Matrix<float> human_inputs(std::span<const HumanPose> poses);
nn::Matrix<float> robot_inputs(std::span<const RobotPose> poses);

// ---------------------------------------------------------------------------
// Training

// Held-out human poses with reference robot poses (normally oracle solutions).
struct ValidationSet {
  std::vector<HumanPose> humans;
  std::vector<RobotPose> references;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double l_triplet = 0.0;
  double l_rec = 0.0;
  double l_ltc = 0.0;
  double total = 0.0;
  double val_mse = 0.0;  // NaN without a validation set

  friend bool operator==(const EpochMetrics& a, const EpochMetrics& b);
};

struct TrainCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Mean squared joint error between retargeted validation humans and references.
double validation_mse(const RetargetModel& model, const ValidationSet& val);

// Runs config.epochs epochs of mine -> forward -> loss -> backward -> Adam on
// model.nets. Deterministic for fixed inputs. Throws TrainingDivergedError on a
// non-finite loss or gradient.
std::vector<EpochMetrics> train(RetargetModel& model, const PoseBank& human, const PoseBank& robot,
                                const TrainConfig& config, const ValidationSet* val = nullptr,
                                const TrainCallbacks& callbacks = {});

// CSV with header epoch,l_triplet,l_rec,l_ltc,total,val_mse
std::string metrics_csv(std::span<const EpochMetrics> log);
void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints (.rtm)
//
//   0  magic "RTGTMODL"   8  u32 version   12 u32 CRC-32 of every byte after offset 16
//   16 u64 metadata length, metadata JSON (chains, config, network shapes),
//   then float32 parameters for encoder_h, encoder_r, decoder; each layer's
//   weights (row-major, in x out) followed by its biases, and for the decoder
//   the squash center and halfwidth.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const RetargetModel& model);
RetargetModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const RetargetModel& model, const std::filesystem::path& path);
// Throws VersionError, ChecksumError (also for truncation) or ShapeMismatchError.
RetargetModel load_checkpoint(const std::filesystem::path& path);
// Also requires the embedded robot chain to equal `robot_chain`.
RetargetModel load_checkpoint(const std::filesystem::path& path, const KinematicChain& robot_chain);

}  // namespace retarget
