#include "retarget/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "retarget/errors.hpp"

namespace retarget {

namespace {

constexpr char kPairsMagic[8] = {'R', 'T', 'G', 'T', 'P', 'A', 'I', 'R'};
constexpr std::size_t kPairsHeader = 128;
constexpr std::size_t kPairsName = 40;
constexpr std::size_t kPairRecord = 24;
constexpr std::string_view kBaselineMagic = "RTGTBASE";

std::vector<LinkRotationSet> all_links(const PoseBank& bank) {
  std::vector<LinkRotationSet> out;
  out.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    out.push_back(bank.links(i));
  }
  return out;
}

}  // namespace

std::size_t nearest_robot_row(std::span<const LinkRotationSet> robot_links,
                              const LinkRotationSet& target, double* distance) {
  if (robot_links.empty()) {
    throw ValidationError("nearest robot row: empty robot bank");
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < robot_links.size(); ++r) {
    const double d = rotation_distance(target, robot_links[r]);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  if (distance) {
    *distance = best_d;
  }
  return best;
}

PairedDataset generate_pairs(const PoseBank& human, const PoseBank& robot, std::size_t count,
                             std::uint64_t seed, std::size_t workers) {
  if (human.domain != Domain::human || robot.domain != Domain::robot) {
    throw ValidationError("pair generation needs a human bank and a robot bank");
  }
  if (human.empty() || robot.empty()) {
    throw ValidationError("pair generation needs non-empty banks");
  }
  if (count == 0) {
    throw ValidationError("pair count must be at least 1");
  }
  const auto robot_links = all_links(robot);
  PairedDataset out;
  out.human_chain = human.chain_name;
  out.robot_chain = robot.chain_name;
  out.seed = seed;
  out.human_index.resize(count);
  out.robot_index.resize(count);
  out.distances.resize(count);
  detail::parallel_ranges(count, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      const std::size_t h = rng.index(human.size());
      double d = 0.0;
      out.human_index[i] = h;
      out.robot_index[i] = nearest_robot_row(robot_links, human.links(h), &d);
      out.distances[i] = d;
    }
  });
  return out;
}

void validate_pairs(const PairedDataset& pairs, const PoseBank& human, const PoseBank& robot) {
  if (pairs.human_chain != human.chain_name || pairs.robot_chain != robot.chain_name) {
    throw ValidationError("pairs were generated for '" + pairs.human_chain + "' -> '" +
                          pairs.robot_chain + "', banks are '" + human.chain_name + "' and '" +
                          robot.chain_name + "'");
  }
  if (pairs.robot_index.size() != pairs.size() || pairs.distances.size() != pairs.size()) {
    throw ValidationError("pairs: column lengths differ");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs.human_index[i] >= human.size() || pairs.robot_index[i] >= robot.size()) {
      throw ValidationError("pair " + std::to_string(i) + " indexes past the end of a bank");
    }
    const double d = rotation_distance(human.links(pairs.human_index[i]),
                                       robot.links(pairs.robot_index[i]));
    if (!(std::abs(d - pairs.distances[i]) <= 1e-6)) {
      throw ValidationError("pair " + std::to_string(i) + " stores distance " +
                            std::to_string(pairs.distances[i]) + " but recomputes to " +
                            std::to_string(d));
    }
  }
}

std::vector<std::uint8_t> encode_pairs(const PairedDataset& pairs) {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kPairsMagic), sizeof kPairsMagic));
  w.u32(kPairsVersion);
  w.u32(0);
  w.u64(pairs.size());
  w.u64(pairs.seed);
  w.fixed_string(pairs.human_chain, kPairsName);
  w.fixed_string(pairs.robot_chain, kPairsName);
  w.pad_to(kPairsHeader - 4);
  w.u32(0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    w.u64(pairs.human_index[i]);
    w.u64(pairs.robot_index[i]);
    w.f64(pairs.distances[i]);
  }
  auto& bytes = w.data();
  std::uint32_t crc = io::crc32(std::span(bytes).subspan(0, kPairsHeader - 4));
  crc = io::crc32(std::span(bytes).subspan(kPairsHeader), crc);
  std::memcpy(bytes.data() + kPairsHeader - 4, &crc, sizeof crc);
  return std::move(bytes);
}

PairedDataset decode_pairs(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "pairs");
  if (r.text(sizeof kPairsMagic) != std::string_view(kPairsMagic, sizeof kPairsMagic)) {
    throw FormatError("pairs: bad magic, not a .pairs file");
  }
  const std::uint32_t version = r.u32();
  if (version != kPairsVersion) {
    throw VersionError(version, kPairsVersion, "pairs");
  }
  r.u32();
  PairedDataset out;
  const std::uint64_t count = r.u64();
  out.seed = r.u64();
  out.human_chain = r.fixed_string(kPairsName);
  out.robot_chain = r.fixed_string(kPairsName);
  r.seek(kPairsHeader - 4);
  const std::uint32_t stored = r.u32();
  const std::size_t payload = bytes.size() - kPairsHeader;
  if (count > payload / kPairRecord) {
    throw TruncatedError("pairs: truncated, header declares " + std::to_string(count) +
                         " pairs but the payload holds " + std::to_string(payload / kPairRecord));
  }
  if (payload != count * kPairRecord) {
    throw ChecksumError("pairs: unexpected bytes after payload");
  }
  std::uint32_t crc = io::crc32(bytes.subspan(0, kPairsHeader - 4));
  crc = io::crc32(bytes.subspan(kPairsHeader), crc);
  if (crc != stored) {
    throw ChecksumError("pairs: checksum mismatch, file is corrupt");
  }
  out.human_index.resize(count);
  out.robot_index.resize(count);
  out.distances.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.human_index[i] = r.u64();
    out.robot_index[i] = r.u64();
    out.distances[i] = r.f64();
  }
  return out;
}

void save_pairs(const PairedDataset& pairs, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_pairs(pairs));
}

PairedDataset load_pairs(const std::filesystem::path& path) {
  return decode_pairs(io::read_file(path));
}

// ---------------------------------------------------------------------------

BaselineModel make_baseline_model(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, const TrainConfig& config) {
  config.validate();
  if (!human_chain.all_spherical() || !robot_chain.all_revolute()) {
    throw ValidationError("baseline needs a spherical human chain and a revolute robot chain");
  }
  std::vector<std::size_t> dims{4 * human_chain.joint_count()};
  dims.insert(dims.end(), config.hidden_layers, config.hidden_width);
  dims.push_back(config.latent_dim);
  dims.insert(dims.end(), config.hidden_layers, config.hidden_width);
  dims.push_back(robot_chain.joint_count());
  const auto limits = joint_limits(robot_chain);
  return BaselineModel{human_chain, robot_chain, config,
                       nn::mlp_init<float>(dims, nn::OutputActivation::limit_squash,
                                           derive_seed(config.seed, 201), &limits)};
}

std::vector<EpochMetrics> train_baseline(BaselineModel& model, const PairedDataset& pairs,
                                         const PoseBank& human, const PoseBank& robot,
                                         const TrainConfig& config, const ValidationSet* val,
                                         const TrainCallbacks& callbacks) {
  config.validate();
  if (human.chain_name != model.human_chain.name() || robot.chain_name != model.robot_chain.name()) {
    throw ValidationError("baseline banks do not match the model's chains");
  }
  if (pairs.human_chain != human.chain_name || pairs.robot_chain != robot.chain_name) {
    throw ValidationError("pairs do not belong to these banks");
  }
  std::vector<EpochMetrics> log;
  model.config = config;
  if (config.epochs == 0) {
    return log;
  }
  if (pairs.size() == 0) {
    throw ValidationError("baseline training needs at least one pair");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs.human_index[i] >= human.size() || pairs.robot_index[i] >= robot.size()) {
      throw ValidationError("pair " + std::to_string(i) + " indexes past the end of a bank");
    }
  }
  auto state = nn::AdamState<float>::for_model(model.net, nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8});
  const std::size_t steps = config.steps_per_epoch != 0
                                ? config.steps_per_epoch
                                : (pairs.size() + config.batch - 1) / config.batch;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto in_w = static_cast<Eigen::Index>(human.width());
  const auto out_w = static_cast<Eigen::Index>(robot.width());
  const auto b = static_cast<Eigen::Index>(config.batch);
  nn::Matrix<float> x(b, in_w);
  nn::Matrix<float> y(b, out_w);
  const float scale = 1.0f / static_cast<float>(config.batch);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, 3'000'000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    double sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      for (Eigen::Index k = 0; k < b; ++k) {
        const std::size_t p = order[(step * config.batch + static_cast<std::size_t>(k)) % order.size()];
        const auto hr = human.row(pairs.human_index[p]);
        const auto rr = robot.row(pairs.robot_index[p]);
        std::copy(hr.begin(), hr.end(), x.row(k).data());
        std::copy(rr.begin(), rr.end(), y.row(k).data());
      }
      nn::ForwardCache<float> cache;
      const nn::Matrix<float> y_hat = nn::mlp_forward(model.net, x, &cache);
      const nn::Matrix<float> diff = y - y_hat;
      const double loss = diff.cast<double>().array().abs().rowwise().sum().mean();
      const nn::Matrix<float> upstream = diff.unaryExpr([scale](float v) {
        return v > 0.0f ? -scale : (v < 0.0f ? scale : 0.0f);
      });
      const auto grads = nn::mlp_backward(model.net, cache, upstream);
      if (!std::isfinite(loss) || !grads.all_finite()) {
        throw TrainingDivergedError(epoch, step, "baseline training diverged");
      }
      nn::adam_step(model.net, state, grads);
      sum += loss;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.l_rec = sum / static_cast<double>(steps);
    m.total = m.l_rec;
    m.val_mse = val ? baseline_validation_mse(model, *val) : std::numeric_limits<double>::quiet_NaN();
    log.push_back(m);
    if (callbacks.on_epoch) {
      callbacks.on_epoch(m);
    }
  }
  return log;
}

RobotPose baseline_retarget(const BaselineModel& model, const HumanPose& pose) {
  if (pose.joint_count() != model.human_chain.joint_count()) {
    throw ValidationError("human pose has " + std::to_string(pose.joint_count()) +
                          " joints but chain '" + model.human_chain.name() + "' has " +
                          std::to_string(model.human_chain.joint_count()));
  }
  const auto y = nn::mlp_forward(model.net, human_inputs(std::span(&pose, 1)));
  std::vector<double> angles(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    angles[static_cast<std::size_t>(j)] = static_cast<double>(y(0, j));
  }
  return RobotPose(model.robot_chain, std::move(angles));
}

double baseline_validation_mse(const BaselineModel& model, const ValidationSet& val) {
  if (val.humans.size() != val.references.size() || val.humans.empty()) {
    throw ValidationError("validation set needs matching, non-empty human and reference lists");
  }
  const auto y = nn::mlp_forward(model.net, human_inputs(val.humans));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < val.references.size(); ++i) {
    if (val.references[i].joint_count() != static_cast<std::size_t>(y.cols())) {
      throw ValidationError("validation reference width does not match the robot chain");
    }
    for (std::size_t j = 0; j < val.references[i].joint_count(); ++j) {
      const double d =
          static_cast<double>(y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) -
          val.references[i][j];
      sum += d * d;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::vector<std::uint8_t> encode_baseline(const BaselineModel& model) {
  nlohmann::json meta;
  meta["human_chain"] = nlohmann::json::parse(model.human_chain.to_json());
  meta["robot_chain"] = nlohmann::json::parse(model.robot_chain.to_json());
  meta["config"] = nlohmann::json::parse(model.config.to_json());
  meta["networks"] = {io::mlp_shape(model.net)};
  const std::array<const nn::MlpModel<float>*, 1> nets{&model.net};
  return io::encode_model_file(kBaselineMagic, kBaselineVersion, meta, nets);
}

BaselineModel decode_baseline(std::span<const std::uint8_t> bytes) {
  auto file = io::decode_model_file(bytes, kBaselineMagic, kBaselineVersion, "baseline model");
  if (file.nets.size() != 1) {
    throw ShapeMismatchError("baseline model: expected 1 network");
  }
  try {
    BaselineModel model{KinematicChain::from_json(file.metadata.at("human_chain").dump()),
                        KinematicChain::from_json(file.metadata.at("robot_chain").dump()),
                        TrainConfig::from_json(file.metadata.at("config").dump()),
                        std::move(file.nets[0])};
    if (model.net.input_dim() != 4 * model.human_chain.joint_count() ||
        model.net.output_dim() != model.robot_chain.joint_count() ||
        model.net.output_activation != nn::OutputActivation::limit_squash) {
      throw ShapeMismatchError("baseline model: network does not match the embedded chains");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("baseline model: bad metadata: ") + e.what());
  }
}

void save_baseline(const BaselineModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_baseline(model));
}

BaselineModel load_baseline(const std::filesystem::path& path) {
  return decode_baseline(io::read_file(path));
}

}  // namespace retarget
