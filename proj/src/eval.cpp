#include "retarget/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "parallel.hpp"
#include "retarget/errors.hpp"
#include "retarget/runtime.hpp"

namespace retarget {

namespace {

double clamp_to(const JointLimits& l, double v) { return std::clamp(v, l.min, l.max); }

class LinkObjective {
 public:
  LinkObjective(const KinematicChain& chain, const LinkRotationSet& target)
      : chain_(chain), target_(target) {}

  double operator()(const std::vector<double>& angles) const {
    return rotation_distance(semantic_link_rotations(chain_, RobotPose(chain_, angles)), target_);
  }

 private:
  const KinematicChain& chain_;
  const LinkRotationSet& target_;
};

constexpr int kMaxSweeps = 200;

std::vector<double> descend(const KinematicChain& chain, const LinkObjective& f,
                            std::vector<double> q, double& value) {
  value = f(q);
  double step = kOracleInitialStep;
  for (int level = 0; level <= kOracleHalvings; ++level, step *= 0.5) {
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      bool improved = false;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double original = q[j];
        for (const double dir : {1.0, -1.0}) {
          const double cand = clamp_to(chain.joint(j).limits, original + dir * step);
          if (cand == original) {
            continue;
          }
          q[j] = cand;
          const double v = f(q);
          if (v < value) {
            value = v;
            improved = true;
            break;
          }
          q[j] = original;
        }
      }
      if (!improved) {
        break;
      }
    }
  }
  return q;
}

std::vector<HumanPose> bank_humans(const KinematicChain& chain, const PoseBank& bank) {
  std::vector<HumanPose> out;
  out.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    out.push_back(bank.human_pose(chain, i));
  }
  return out;
}

}  // namespace

OracleResult oracle_retarget(const KinematicChain& robot_chain, const LinkRotationSet& target,
                             std::size_t budget, std::uint64_t seed) {
  if (!robot_chain.all_revolute()) {
    throw ValidationError("oracle needs an all-revolute robot chain, got '" + robot_chain.name() +
                          "'");
  }
  if (budget == 0) {
    throw ValidationError("oracle restart budget must be at least 1");
  }
  const LinkObjective f(robot_chain, target);
  const std::size_t n = robot_chain.joint_count();
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < budget; ++k) {
    std::vector<double> start(n);
    if (k == 0) {
      for (std::size_t j = 0; j < n; ++j) {
        start[j] = clamp_to(robot_chain.joint(j).limits, 0.0);
      }
    } else {
      Rng rng(derive_seed(seed, k));
      for (std::size_t j = 0; j < n; ++j) {
        start[j] = rng.uniform(robot_chain.joint(j).limits.min, robot_chain.joint(j).limits.max);
      }
    }
    double value = 0.0;
    auto q = descend(robot_chain, f, std::move(start), value);
    if (value < best_value) {
      best_value = value;
      best = std::move(q);
    }
  }
  return {RobotPose(robot_chain, std::move(best)), best_value};
}

OracleResult oracle_retarget(const KinematicChain& robot_chain, const KinematicChain& human_chain,
                             const HumanPose& pose, std::size_t budget, std::uint64_t seed) {
  return oracle_retarget(robot_chain, semantic_link_rotations(human_chain, pose), budget, seed);
}

std::vector<OracleResult> oracle_batch(const KinematicChain& robot_chain,
                                       const KinematicChain& human_chain,
                                       std::span<const HumanPose> poses, std::size_t budget,
                                       std::uint64_t seed, std::size_t workers) {
  std::vector<std::optional<OracleResult>> slots(poses.size());
  detail::parallel_ranges(poses.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      slots[i] = oracle_retarget(robot_chain, human_chain, poses[i], budget, derive_seed(seed, i));
    }
  });
  std::vector<OracleResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) {
    out.push_back(std::move(*s));
  }
  return out;
}

ValidationSet make_validation_set(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, std::size_t count,
                                  std::uint64_t seed, std::size_t budget, std::size_t workers) {
  const auto bank = build_pose_bank(human_chain, Domain::human, count, seed, workers);
  ValidationSet val;
  val.humans = bank_humans(human_chain, bank);
  for (auto& r : oracle_batch(robot_chain, human_chain, val.humans, budget, seed, workers)) {
    val.references.push_back(std::move(r.pose));
  }
  return val;
}

double eval_joint_mse(const MotionTrace& predicted, const MotionTrace& reference) {
  if (predicted.chain_name != reference.chain_name) {
    throw ValidationError("traces use different chains: '" + predicted.chain_name + "' and '" +
                          reference.chain_name + "'");
  }
  if (predicted.frames.size() != reference.frames.size()) {
    throw ValidationError("traces differ in length: " + std::to_string(predicted.frames.size()) +
                          " vs " + std::to_string(reference.frames.size()) + " frames");
  }
  if (predicted.frames.empty()) {
    throw ValidationError("empty trace");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < predicted.frames.size(); ++f) {
    const auto& a = predicted.frames[f];
    const auto& b = reference.frames[f];
    if (a.size() != b.size()) {
      throw ValidationError("trace frame " + std::to_string(f) + " differs in width");
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] - b[j];
      sum += d * d;
    }
    count += a.size();
  }
  return sum / static_cast<double>(count);
}

SemanticReport eval_semantic(const RetargetModel& model, std::span<const HumanPose> poses,
                             std::size_t budget, std::uint64_t seed, std::size_t workers) {
  if (poses.empty()) {
    throw ValidationError("semantic evaluation needs at least one pose");
  }
  const auto& hc = model.human_chain;
  const auto& rc = model.robot_chain;
  const auto oracle = oracle_batch(rc, hc, poses, budget, seed, workers);
  SemanticReport report;
  report.rows.resize(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto target = semantic_link_rotations(hc, poses[i]);
    const auto predicted = retarget(model, poses[i]);
    Rng rng(derive_seed(seed, (std::uint64_t{1} << 32) + i));
    const auto random = sample_robot_pose(rc, rng);
    auto& row = report.rows[i];
    row.retarget_dgr = rotation_distance(semantic_link_rotations(rc, predicted), target);
    row.oracle_dgr = oracle[i].distance;
    row.random_dgr = rotation_distance(semantic_link_rotations(rc, random), target);
    double se = 0.0;
    for (std::size_t j = 0; j < predicted.joint_count(); ++j) {
      const double d = predicted[j] - oracle[i].pose[j];
      se += d * d;
    }
    row.joint_mse = se / static_cast<double>(predicted.joint_count());
    report.retarget_mean += row.retarget_dgr;
    report.oracle_mean += row.oracle_dgr;
    report.random_mean += row.random_dgr;
    report.retarget_poses.push_back(predicted);
    report.oracle_poses.push_back(oracle[i].pose);
  }
  const double n = static_cast<double>(poses.size());
  report.retarget_mean /= n;
  report.oracle_mean /= n;
  report.random_mean /= n;
  return report;
}

double triplet_agreement(std::span<const Triplet> triplets, const LatentDistanceFn& latent_distance) {
  if (triplets.empty()) {
    throw ValidationError("triplet agreement needs at least one triplet");
  }
  std::size_t agree = 0;
  for (const auto& t : triplets) {
    if (latent_distance(t.anchor, t.positive) < latent_distance(t.anchor, t.negative)) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(triplets.size());
}

double eval_triplet_agreement(const RetargetModel& model, const PoseBank& human,
                              const PoseBank& robot, std::size_t n_triplets, std::uint64_t seed) {
  if (human.chain_name != model.human_chain.name() || robot.chain_name != model.robot_chain.name()) {
    throw ValidationError("banks do not match the model's chains");
  }
  Rng rng(seed);
  const auto triplets = mine_triplets(human, robot, n_triplets, model.config, rng);
  const auto batch = make_loss_batch(human, robot, triplets, {}, {});
  nn::Matrix<float> z_h;
  nn::Matrix<float> z_r;
  if (batch.triplet_human.rows() > 0) {
    z_h = nn::mlp_forward(model.nets.encoder_h, batch.triplet_human);
  }
  if (batch.triplet_robot.rows() > 0) {
    z_r = nn::mlp_forward(model.nets.encoder_r, batch.triplet_robot);
  }
  std::size_t agree = 0;
  for (const auto& items : batch.triplets) {
    auto code = [&](std::size_t k) -> Eigen::RowVectorXd {
      const auto& it = items[k];
      return (it.domain == Domain::human ? z_h.row(it.row) : z_r.row(it.row)).cast<double>();
    };
    const Eigen::RowVectorXd o = code(0);
    if ((o - code(1)).norm() < (o - code(2)).norm()) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(batch.triplets.size());
}

LatencyReport bench_latency(const KinematicChain& human_chain,
                            const std::function<void(const HumanPose&)>& retarget_fn,
                            std::size_t n_poses, std::uint64_t seed) {
  if (n_poses < kLatencyMinPoses) {
    throw ValidationError("latency benchmark needs at least " + std::to_string(kLatencyMinPoses) +
                          " poses, got " + std::to_string(n_poses));
  }
  const auto bank = build_pose_bank(human_chain, Domain::human, n_poses + kLatencyWarmup, seed);
  const auto poses = bank_humans(human_chain, bank);
  for (std::size_t i = 0; i < kLatencyWarmup; ++i) {
    retarget_fn(poses[i]);
  }
  std::vector<double> times;
  times.reserve(n_poses);
  for (std::size_t i = kLatencyWarmup; i < poses.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    retarget_fn(poses[i]);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  LatencyReport r;
  r.calls = times.size();
  double sum = 0.0;
  for (const double t : times) {
    sum += t;
  }
  r.mean_s = sum / static_cast<double>(times.size());
  std::sort(times.begin(), times.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(times.size())));
  r.p99_s = times[std::max<std::size_t>(rank, 1) - 1];
  r.khz = 1.0 / (r.mean_s * 1000.0);
  return r;
}

LatencyReport bench_latency(const RetargetModel& model, std::size_t n_poses, std::uint64_t seed) {
  return bench_latency(
      model.human_chain, [&model](const HumanPose& p) { (void)retarget(model, p); }, n_poses,
      seed);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["pose_count"] = pose_count;
  j["joint_mse"] = joint_mse;
  j["semantic_dgr_mean"] = semantic_dgr_mean;
  j["oracle_dgr_mean"] = oracle_dgr_mean;
  j["random_dgr_mean"] = random_dgr_mean;
  j["triplet_agreement"] = triplet_agreement;
  j["latency_mean_s"] = latency_mean;
  j["latency_p99_s"] = latency_p99;
  j["control_frequency_khz"] = control_frequency;
  return j.dump(2) + "\n";
}

std::string EvalReport::rows_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "index,retarget_dgr,oracle_dgr,random_dgr,joint_mse\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << i << ',' << r.retarget_dgr << ',' << r.oracle_dgr << ',' << r.random_dgr << ','
        << r.joint_mse << '\n';
  }
  return out.str();
}

EvalReport evaluate(const RetargetModel& model, const EvalOptions& options) {
  if (options.poses == 0) {
    throw ValidationError("evaluation needs at least one pose");
  }
  const auto& hc = model.human_chain;
  const auto& rc = model.robot_chain;
  const auto human_bank =
      build_pose_bank(hc, Domain::human, options.poses, derive_seed(options.seed, 1), options.workers);
  const auto humans = bank_humans(hc, human_bank);
  const auto semantic = eval_semantic(model, humans, options.budget, options.seed, options.workers);

  const auto predicted = make_trace(rc, 30.0, semantic.retarget_poses);
  const auto reference = make_trace(rc, 30.0, semantic.oracle_poses);

  EvalReport report;
  report.label = hc.name() + " -> " + rc.name();
  report.pose_count = humans.size();
  report.joint_mse = eval_joint_mse(predicted, reference);
  report.semantic_dgr_mean = semantic.retarget_mean;
  report.oracle_dgr_mean = semantic.oracle_mean;
  report.random_dgr_mean = semantic.random_mean;
  report.rows = semantic.rows;
  if (options.triplets > 0) {
    const std::size_t bank_size = std::max<std::size_t>(options.triplets, 1000);
    const auto th = build_pose_bank(hc, Domain::human, bank_size, derive_seed(options.seed, 2),
                                    options.workers);
    const auto tr = build_pose_bank(rc, Domain::robot, bank_size, derive_seed(options.seed, 3),
                                    options.workers);
    report.triplet_agreement =
        eval_triplet_agreement(model, th, tr, options.triplets, derive_seed(options.seed, 4));
  }
  if (options.latency_calls > 0) {
    const auto lat = bench_latency(model, options.latency_calls, derive_seed(options.seed, 5));
    report.latency_mean = lat.mean_s;
    report.latency_p99 = lat.p99_s;
    report.control_frequency = lat.khz;
  }
  return report;
}

}  // namespace retarget
