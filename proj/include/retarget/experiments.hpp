#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "retarget/pose_data.hpp"
#include "retarget/training.hpp"

namespace retarget {

struct AblationVariant {
  std::string name;
  double lambda_triplet = 0.0;
  double lambda_rec = 0.0;
  double lambda_ltc = 0.0;
};

// full (10, 5, 1), no_ltc (10, 5, 0), no_triplet (0, 5, 1)
std::array<AblationVariant, 3> ablation_variants();

struct AblationRow {
  AblationVariant variant;
  std::vector<EpochMetrics> log;
  double val_mse = 0.0;
  RetargetModel model;
};

using AblationProgress = std::function<void(const AblationVariant&, const EpochMetrics&)>;

// Trains every variant from the same seed on the same banks and scores each
// on `val`. Only the loss weights differ between variants.
std::vector<AblationRow> run_ablation(const KinematicChain& human_chain,
                                      const KinematicChain& robot_chain, const PoseBank& human,
                                      const PoseBank& robot, const TrainConfig& base,
                                      const ValidationSet& val,
                                      std::span<const AblationVariant> variants,
                                      const AblationProgress& progress = {});

// variant,lambda_triplet,lambda_rec,lambda_ltc,final_total,val_mse
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace retarget
