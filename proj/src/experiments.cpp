#include "retarget/experiments.hpp"

#include <sstream>

namespace retarget {

std::array<AblationVariant, 3> ablation_variants() {
  return {AblationVariant{"full", 10.0, 5.0, 1.0}, AblationVariant{"no_ltc", 10.0, 5.0, 0.0},
          AblationVariant{"no_triplet", 0.0, 5.0, 1.0}};
}

std::vector<AblationRow> run_ablation(const KinematicChain& human_chain,
                                      const KinematicChain& robot_chain, const PoseBank& human,
                                      const PoseBank& robot, const TrainConfig& base,
                                      const ValidationSet& val,
                                      std::span<const AblationVariant> variants,
                                      const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainConfig config = base;
    config.lambda_triplet = v.lambda_triplet;
    config.lambda_rec = v.lambda_rec;
    config.lambda_ltc = v.lambda_ltc;
    AblationRow row{v, {}, 0.0, make_retarget_model(human_chain, robot_chain, config)};
    TrainCallbacks callbacks;
    if (progress) {
      callbacks.on_epoch = [&](const EpochMetrics& m) { progress(v, m); };
    }
    row.log = train(row.model, human, robot, config, nullptr, callbacks);
    row.val_mse = validation_mse(row.model, val);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "variant,lambda_triplet,lambda_rec,lambda_ltc,final_total,val_mse\n";
  for (const auto& r : rows) {
    out << r.variant.name << ',' << r.variant.lambda_triplet << ',' << r.variant.lambda_rec << ','
        << r.variant.lambda_ltc << ',' << (r.log.empty() ? 0.0 : r.log.back().total) << ','
        << r.val_mse << '\n';
  }
  return out.str();
}

}  // namespace retarget
