#include "retarget/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "retarget/errors.hpp"

namespace retarget {

using nn::Matrix;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("train config: ") + name + " must be positive");
    }
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("train config: ") + name + " must be non-negative");
    }
  };
  positive(lr, "lr");
  positive(alpha, "alpha");
  positive(separation_delta, "separation_delta");
  non_negative(lambda_triplet, "lambda_triplet");
  non_negative(lambda_rec, "lambda_rec");
  non_negative(lambda_ltc, "lambda_ltc");
  if (batch == 0) {
    throw ValidationError("train config: batch must be at least 1");
  }
  if (!(cross_domain_fraction >= 0.0 && cross_domain_fraction <= 1.0)) {
    throw ValidationError("train config: cross_domain_fraction must lie in [0, 1]");
  }
  if (!(local_fraction >= 0.0 && local_fraction <= 1.0)) {
    throw ValidationError("train config: local_fraction must lie in [0, 1]");
  }
  if (candidate_pool == 0) {
    throw ValidationError("train config: candidate_pool must be at least 1");
  }
  if (latent_dim == 0 || hidden_width == 0) {
    throw ValidationError("train config: latent_dim and hidden_width must be positive");
  }
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr"] = lr;
  j["batch"] = batch;
  j["alpha"] = alpha;
  j["lambda_triplet"] = lambda_triplet;
  j["lambda_rec"] = lambda_rec;
  j["lambda_ltc"] = lambda_ltc;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["cross_domain_fraction"] = cross_domain_fraction;
  j["separation_delta"] = separation_delta;
  j["local_fraction"] = local_fraction;
  j["candidate_pool"] = candidate_pool;
  j["steps_per_epoch"] = steps_per_epoch;
  j["latent_dim"] = latent_dim;
  j["hidden_width"] = hidden_width;
  j["hidden_layers"] = hidden_layers;
  return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.lambda_triplet = j.at("lambda_triplet").get<double>();
    c.lambda_rec = j.at("lambda_rec").get<double>();
    c.lambda_ltc = j.at("lambda_ltc").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.cross_domain_fraction = j.at("cross_domain_fraction").get<double>();
    c.separation_delta = j.at("separation_delta").get<double>();
    c.local_fraction = j.at("local_fraction").get<double>();
    c.candidate_pool = j.at("candidate_pool").get<std::size_t>();
    c.steps_per_epoch = j.at("steps_per_epoch").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
    c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Networks

template <typename Scalar>
void RetargetNetworks<Scalar>::validate() const {
  encoder_h.validate();
  encoder_r.validate();
  decoder.validate();
  if (encoder_r.output_dim() != latent_dim() || decoder.input_dim() != latent_dim()) {
    throw ShapeMismatchError("retarget networks: latent widths disagree");
  }
  if (decoder.output_dim() != encoder_r.input_dim()) {
    throw ShapeMismatchError("retarget networks: decoder output must match the robot encoder input");
  }
  if (decoder.output_activation != nn::OutputActivation::limit_squash) {
    throw ShapeMismatchError("retarget networks: decoder must squash into joint limits");
  }
}

nn::SquashLimits joint_limits(const KinematicChain& robot_chain) {
  nn::SquashLimits limits;
  for (const auto& j : robot_chain.joints()) {
    limits.min.push_back(j.limits.min);
    limits.max.push_back(j.limits.max);
  }
  return limits;
}

template <typename Scalar>
RetargetNetworks<Scalar> make_networks(std::size_t human_input, const nn::SquashLimits& robot_limits,
                                       std::size_t latent_dim, std::size_t hidden_width,
                                       std::size_t hidden_layers, std::uint64_t seed) {
  const std::size_t robot_dim = robot_limits.min.size();
  auto dims = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), hidden_layers, hidden_width);
    d.push_back(out);
    return d;
  };
  RetargetNetworks<Scalar> nets;
  nets.encoder_h = nn::mlp_init<Scalar>(dims(human_input, latent_dim), nn::OutputActivation::linear,
                                        derive_seed(seed, 101));
  nets.encoder_r = nn::mlp_init<Scalar>(dims(robot_dim, latent_dim), nn::OutputActivation::linear,
                                        derive_seed(seed, 102));
  nets.decoder = nn::mlp_init<Scalar>(dims(latent_dim, robot_dim),
                                      nn::OutputActivation::limit_squash, derive_seed(seed, 103),
                                      &robot_limits);
  return nets;
}

RetargetModel make_retarget_model(const KinematicChain& human_chain,
                                  const KinematicChain& robot_chain, const TrainConfig& config) {
  config.validate();
  if (!human_chain.all_spherical()) {
    throw ValidationError("human chain '" + human_chain.name() + "' must be all-spherical");
  }
  if (!robot_chain.all_revolute()) {
    throw ValidationError("robot chain '" + robot_chain.name() + "' must be all-revolute");
  }
  return RetargetModel{
      human_chain, robot_chain, config,
      make_networks<float>(4 * human_chain.joint_count(), joint_limits(robot_chain),
                           config.latent_dim, config.hidden_width, config.hidden_layers,
                           config.seed)};
}

// ---------------------------------------------------------------------------
// Mining

std::vector<Triplet> mine_triplets(const PoseBank& human, const PoseBank& robot, std::size_t count,
                                   const TrainConfig& config, Rng& rng) {
  if (human.empty() && robot.empty()) {
    throw ValidationError("mine_triplets: both banks are empty");
  }
  const std::size_t total = human.size() + robot.size();
  if (total < 3) {
    throw ValidationError("mine_triplets: banks too small to form a triplet");
  }
  auto bank_of = [&](Domain d) -> const PoseBank& { return d == Domain::human ? human : robot; };
  auto draw = [&](Domain d) { return SampleRef{d, rng.index(bank_of(d).size())}; };
  auto links = [&](const SampleRef& r) { return bank_of(r.domain).links(r.index); };
  auto random_domain = [&]() {
    if (human.empty()) return Domain::robot;
    if (robot.empty()) return Domain::human;
    return rng.coin(0.5) ? Domain::human : Domain::robot;
  };

  const auto cross_count =
      static_cast<std::size_t>(std::ceil(config.cross_domain_fraction * static_cast<double>(count)));
  const auto local_count =
      static_cast<std::size_t>(std::ceil(config.local_fraction * static_cast<double>(count)));
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const bool cross = i < cross_count && !human.empty() && !robot.empty();
    // Local triplets interleave with cross-domain ones so both mixes occur.
    const bool local = config.candidate_pool > 1 && (count - 1 - i) < local_count;
    const Domain anchor_domain = random_domain();
    const SampleRef anchor = draw(anchor_domain);
    const LinkRotationSet anchor_links = links(anchor);
    const Domain other = anchor_domain == Domain::human ? Domain::robot : Domain::human;
    // A candidate is one uniform draw, or for local triplets the draw nearest
    // the anchor out of candidate_pool.
    auto candidate = [&](double& distance) {
      const Domain d = cross ? other : random_domain();
      SampleRef best = draw(d);
      distance = rotation_distance(anchor_links, links(best));
      for (std::size_t k = 1; local && k < config.candidate_pool; ++k) {
        const SampleRef c = draw(d);
        if (c == anchor) {
          continue;
        }
        const double dc = rotation_distance(anchor_links, links(c));
        if (dc < distance || best == anchor) {
          best = c;
          distance = dc;
        }
      }
      return best;
    };
    for (int attempt = 0; attempt <= kTripletRetries; ++attempt) {
      double da = 0.0;
      double db = 0.0;
      const SampleRef a = candidate(da);
      const SampleRef b = candidate(db);
      if (a == anchor || b == anchor || a == b) {
        continue;
      }
      if (std::abs(da - db) < config.separation_delta) {
        continue;
      }
      out.push_back(da < db ? Triplet{anchor, a, b, da, db} : Triplet{anchor, b, a, db, da});
      break;
    }
  }
  if (out.empty() && count > 0) {
    throw ValidationError("mine_triplets: could not form any triplet with the separation margin");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double triplet_loss(std::span<const double> z_o, std::span<const double> z_p,
                    std::span<const double> z_n, double alpha) {
  if (z_o.size() != z_p.size() || z_o.size() != z_n.size()) {
    throw ShapeMismatchError("triplet_loss: latent dims differ");
  }
  double dp = 0.0;
  double dn = 0.0;
  for (std::size_t k = 0; k < z_o.size(); ++k) {
    dp += (z_o[k] - z_p[k]) * (z_o[k] - z_p[k]);
    dn += (z_o[k] - z_n[k]) * (z_o[k] - z_n[k]);
  }
  return std::max(std::sqrt(dp) - std::sqrt(dn) + alpha, 0.0);
}

double combine_losses(double triplet, double rec, double ltc, const TrainConfig& config) {
  return config.lambda_triplet * triplet + config.lambda_rec * rec + config.lambda_ltc * ltc;
}

template <typename Scalar>
NetworkGradients<Scalar> NetworkGradients<Scalar>::zeros_like(const RetargetNetworks<Scalar>& nets) {
  return {nn::GradientSet<Scalar>::zeros_like(nets.encoder_h),
          nn::GradientSet<Scalar>::zeros_like(nets.encoder_r),
          nn::GradientSet<Scalar>::zeros_like(nets.decoder)};
}

template <typename Scalar>
bool NetworkGradients<Scalar>::all_finite() const {
  return encoder_h.all_finite() && encoder_r.all_finite() && decoder.all_finite();
}


namespace {

template <typename Scalar>
Matrix<Scalar> signs(const Matrix<Scalar>& m, Scalar scale) {
  return m.unaryExpr([scale](Scalar v) {
    return v > Scalar(0) ? scale : (v < Scalar(0) ? -scale : Scalar(0));
  });
}

template <typename Scalar>
double mean_row_l1(const Matrix<Scalar>& m) {
  return m.template cast<double>().array().abs().rowwise().sum().mean();
}

template <typename Scalar>
double triplet_part(const RetargetNetworks<Scalar>& nets, const LossBatch<Scalar>& batch,
                    const TrainConfig& config, NetworkGradients<Scalar>* grads) {
  const bool want = grads != nullptr && config.lambda_triplet != 0.0;
  const bool has_h = batch.triplet_human.rows() > 0;
  const bool has_r = batch.triplet_robot.rows() > 0;
  nn::ForwardCache<Scalar> cache_h;
  nn::ForwardCache<Scalar> cache_r;
  Matrix<Scalar> z_h;
  Matrix<Scalar> z_r;
  if (has_h) {
    z_h = nn::mlp_forward(nets.encoder_h, batch.triplet_human, want ? &cache_h : nullptr);
  }
  if (has_r) {
    z_r = nn::mlp_forward(nets.encoder_r, batch.triplet_robot, want ? &cache_r : nullptr);
  }
  Matrix<double> dz_h = Matrix<double>::Zero(z_h.rows(), z_h.cols());
  Matrix<double> dz_r = Matrix<double>::Zero(z_r.rows(), z_r.cols());

  using Item = typename LossBatch<Scalar>::Item;
  auto latent = [&](const Item& it) -> Eigen::RowVectorXd {
    return (it.domain == Domain::human ? z_h.row(it.row) : z_r.row(it.row)).template cast<double>();
  };
  auto add_grad = [&](const Item& it, const Eigen::RowVectorXd& g) {
    if (it.domain == Domain::human) {
      dz_h.row(it.row) += g;
    } else {
      dz_r.row(it.row) += g;
    }
  };

  const double n = static_cast<double>(batch.triplets.size());
  const double scale = config.lambda_triplet / n;
  double sum = 0.0;
  for (const auto& t : batch.triplets) {
    const Eigen::RowVectorXd o = latent(t[0]);
    const Eigen::RowVectorXd up = o - latent(t[1]);
    const Eigen::RowVectorXd un = o - latent(t[2]);
    const double np = up.norm();
    const double nq = un.norm();
    const double value = np - nq + config.alpha;
    if (value <= 0.0) {
      continue;
    }
    sum += value;
    if (want) {
      // d|u|/du = u/|u|, taken as zero at u = 0.
      const Eigen::RowVectorXd gp = np > 0.0 ? Eigen::RowVectorXd(up / np)
                                             : Eigen::RowVectorXd::Zero(up.size());
      const Eigen::RowVectorXd gn = nq > 0.0 ? Eigen::RowVectorXd(un / nq)
                                             : Eigen::RowVectorXd::Zero(un.size());
      add_grad(t[0], scale * (gp - gn));
      add_grad(t[1], -scale * gp);
      add_grad(t[2], scale * gn);
    }
  }
  if (want) {
    if (has_h) {
      grads->encoder_h += nn::mlp_backward(nets.encoder_h, cache_h, Matrix<Scalar>(dz_h.template cast<Scalar>()));
    }
    if (has_r) {
      grads->encoder_r += nn::mlp_backward(nets.encoder_r, cache_r, Matrix<Scalar>(dz_r.template cast<Scalar>()));
    }
  }
  return sum / n;
}

template <typename Scalar>
double reconstruction_part(const RetargetNetworks<Scalar>& nets, const Matrix<Scalar>& x,
                           const TrainConfig& config, NetworkGradients<Scalar>* grads) {
  const bool want = grads != nullptr && config.lambda_rec != 0.0;
  nn::ForwardCache<Scalar> cache_r;
  nn::ForwardCache<Scalar> cache_d;
  const Matrix<Scalar> z = nn::mlp_forward(nets.encoder_r, x, want ? &cache_r : nullptr);
  const Matrix<Scalar> x_hat = nn::mlp_forward(nets.decoder, z, want ? &cache_d : nullptr);
  const Matrix<Scalar> diff = x - x_hat;
  if (want) {
    const auto scale = static_cast<Scalar>(config.lambda_rec / static_cast<double>(x.rows()));
    // d|x - x_hat| / d x_hat = -sign(x - x_hat)
    auto g_d = nn::mlp_backward(nets.decoder, cache_d, signs(diff, -scale));
    auto g_r = nn::mlp_backward(nets.encoder_r, cache_r, g_d.input);
    grads->decoder += g_d;
    grads->encoder_r += g_r;
  }
  return mean_row_l1(diff);
}

template <typename Scalar>
double consistency_part(const RetargetNetworks<Scalar>& nets, const Matrix<Scalar>& x_h,
                        const TrainConfig& config, NetworkGradients<Scalar>* grads) {
  const bool want = grads != nullptr && config.lambda_ltc != 0.0;
  nn::ForwardCache<Scalar> cache_h;
  nn::ForwardCache<Scalar> cache_d;
  nn::ForwardCache<Scalar> cache_r;
  const Matrix<Scalar> z_h = nn::mlp_forward(nets.encoder_h, x_h, want ? &cache_h : nullptr);
  const Matrix<Scalar> x_r = nn::mlp_forward(nets.decoder, z_h, want ? &cache_d : nullptr);
  const Matrix<Scalar> z_r = nn::mlp_forward(nets.encoder_r, x_r, want ? &cache_r : nullptr);
  const Matrix<Scalar> diff = z_h - z_r;
  if (want) {
    const auto scale = static_cast<Scalar>(config.lambda_ltc / static_cast<double>(x_h.rows()));
    const Matrix<Scalar> s = signs(diff, scale);
    auto g_r = nn::mlp_backward(nets.encoder_r, cache_r, Matrix<Scalar>(-s));
    auto g_d = nn::mlp_backward(nets.decoder, cache_d, g_r.input);
    // z_h feeds the loss directly and through D and Q_r.
    auto g_h = nn::mlp_backward(nets.encoder_h, cache_h, Matrix<Scalar>(s + g_d.input));
    grads->encoder_r += g_r;
    grads->decoder += g_d;
    grads->encoder_h += g_h;
  }
  return mean_row_l1(diff);
}

}  // namespace

template <typename Scalar>
LossBreakdown total_loss(const RetargetNetworks<Scalar>& nets, const LossBatch<Scalar>& batch,
                         const TrainConfig& config, NetworkGradients<Scalar>* grads) {
  LossBreakdown out;
  if (!batch.triplets.empty()) {
    out.triplet = triplet_part(nets, batch, config, grads);
  }
  if (batch.rec_robot.rows() > 0) {
    out.rec = reconstruction_part(nets, batch.rec_robot, config, grads);
  }
  if (batch.ltc_human.rows() > 0) {
    out.ltc = consistency_part(nets, batch.ltc_human, config, grads);
  }
  out.total = combine_losses(out.triplet, out.rec, out.ltc, config);
  return out;
}

LossBatch<float> make_loss_batch(const PoseBank& human, const PoseBank& robot,
                                 std::span<const Triplet> triplets,
                                 std::span<const std::size_t> robot_rows,
                                 std::span<const std::size_t> human_rows) {
  using Item = LossBatch<float>::Item;
  LossBatch<float> batch;
  Eigen::Index n_h = 0;
  Eigen::Index n_r = 0;
  for (const auto& t : triplets) {
    for (const auto* ref : {&t.anchor, &t.positive, &t.negative}) {
      (ref->domain == Domain::human ? n_h : n_r) += 1;
    }
  }
  batch.triplet_human.resize(n_h, static_cast<Eigen::Index>(human.width()));
  batch.triplet_robot.resize(n_r, static_cast<Eigen::Index>(robot.width()));
  Eigen::Index next_h = 0;
  Eigen::Index next_r = 0;
  auto place = [&](const SampleRef& ref) -> Item {
    const auto row = (ref.domain == Domain::human ? human : robot).row(ref.index);
    auto& dst = ref.domain == Domain::human ? batch.triplet_human : batch.triplet_robot;
    auto& next = ref.domain == Domain::human ? next_h : next_r;
    std::copy(row.begin(), row.end(), dst.row(next).data());
    return Item{ref.domain, next++};
  };
  batch.triplets.reserve(triplets.size());
  for (const auto& t : triplets) {
    batch.triplets.push_back({place(t.anchor), place(t.positive), place(t.negative)});
  }
  batch.rec_robot.resize(static_cast<Eigen::Index>(robot_rows.size()),
                         static_cast<Eigen::Index>(robot.width()));
  for (std::size_t i = 0; i < robot_rows.size(); ++i) {
    const auto row = robot.row(robot_rows[i]);
    std::copy(row.begin(), row.end(), batch.rec_robot.row(static_cast<Eigen::Index>(i)).data());
  }
  batch.ltc_human.resize(static_cast<Eigen::Index>(human_rows.size()),
                         static_cast<Eigen::Index>(human.width()));
  for (std::size_t i = 0; i < human_rows.size(); ++i) {
    const auto row = human.row(human_rows[i]);
    std::copy(row.begin(), row.end(), batch.ltc_human.row(static_cast<Eigen::Index>(i)).data());
  }
  return batch;
}

nn::Matrix<float> human_inputs(std::span<const HumanPose> poses) {
  const Eigen::Index width = poses.empty() ? 0 : 4 * static_cast<Eigen::Index>(poses[0].joint_count());
  nn::Matrix<float> m(static_cast<Eigen::Index>(poses.size()), width);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (4 * static_cast<Eigen::Index>(poses[i].joint_count()) != width) {
      throw ShapeMismatchError("human poses in one batch must share a chain");
    }
    const auto rotations = poses[i].local_rotations();
    for (std::size_t j = 0; j < rotations.size(); ++j) {
      const auto c = rotations[j].components();
      for (std::size_t k = 0; k < 4; ++k) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(4 * j + k)) = static_cast<float>(c[k]);
      }
    }
  }
  return m;
}

nn::Matrix<float> robot_inputs(std::span<const RobotPose> poses) {
  const Eigen::Index width = poses.empty() ? 0 : static_cast<Eigen::Index>(poses[0].joint_count());
  nn::Matrix<float> m(static_cast<Eigen::Index>(poses.size()), width);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (static_cast<Eigen::Index>(poses[i].joint_count()) != width) {
      throw ShapeMismatchError("robot poses in one batch must share a chain");
    }
    for (Eigen::Index j = 0; j < width; ++j) {
      m(static_cast<Eigen::Index>(i), j) = static_cast<float>(poses[i][static_cast<std::size_t>(j)]);
    }
  }
  return m;
}

namespace {

void require_human_width(const RetargetModel& model, const HumanPose& pose) {
  if (pose.joint_count() != model.human_chain.joint_count()) {
    throw ValidationError("human pose has " + std::to_string(pose.joint_count()) +
                          " joints, model chain '" + model.human_chain.name() + "' has " +
                          std::to_string(model.human_chain.joint_count()));
  }
}

void require_robot_width(const RetargetModel& model, const RobotPose& pose) {
  if (pose.joint_count() != model.robot_chain.joint_count()) {
    throw ValidationError("robot pose has " + std::to_string(pose.joint_count()) +
                          " joints, model chain '" + model.robot_chain.name() + "' has " +
                          std::to_string(model.robot_chain.joint_count()));
  }
}

constexpr Eigen::Index kEvalChunk = 4096;

}  // namespace

double reconstruction_loss(const RetargetModel& model, const RobotPose& pose) {
  require_robot_width(model, pose);
  const auto x = robot_inputs(std::span(&pose, 1));
  const auto x_hat = nn::mlp_forward(model.nets.decoder, nn::mlp_forward(model.nets.encoder_r, x));
  double sum = 0.0;
  for (std::size_t j = 0; j < pose.joint_count(); ++j) {
    sum += std::abs(pose[j] - static_cast<double>(x_hat(0, static_cast<Eigen::Index>(j))));
  }
  return sum;
}

double latent_consistency_loss(const RetargetModel& model, const HumanPose& pose) {
  require_human_width(model, pose);
  const auto z_h = nn::mlp_forward(model.nets.encoder_h, human_inputs(std::span(&pose, 1)));
  const auto z_r =
      nn::mlp_forward(model.nets.encoder_r, nn::mlp_forward(model.nets.decoder, z_h));
  return mean_row_l1(Matrix<float>(z_h - z_r));
}

double mean_reconstruction_loss(const RetargetModel& model, const PoseBank& robot) {
  if (robot.domain != Domain::robot || robot.chain_name != model.robot_chain.name()) {
    throw ValidationError("reconstruction needs a robot bank for chain '" +
                          model.robot_chain.name() + "'");
  }
  double sum = 0.0;
  const auto n = static_cast<Eigen::Index>(robot.size());
  const auto w = static_cast<Eigen::Index>(robot.width());
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index rows = std::min(kEvalChunk, n - start);
    const Eigen::Map<const Matrix<float>> x(robot.poses.data() + start * w, rows, w);
    const Matrix<float> x_hat =
        nn::mlp_forward(model.nets.decoder, nn::mlp_forward(model.nets.encoder_r, Matrix<float>(x)));
    sum += (x.cast<double>() - x_hat.cast<double>()).array().abs().sum();
  }
  return sum / static_cast<double>(n);
}

double mean_latent_consistency_loss(const RetargetModel& model, const PoseBank& human) {
  if (human.domain != Domain::human || human.chain_name != model.human_chain.name()) {
    throw ValidationError("latent consistency needs a human bank for chain '" +
                          model.human_chain.name() + "'");
  }
  double sum = 0.0;
  const auto n = static_cast<Eigen::Index>(human.size());
  const auto w = static_cast<Eigen::Index>(human.width());
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index rows = std::min(kEvalChunk, n - start);
    const Eigen::Map<const Matrix<float>> x(human.poses.data() + start * w, rows, w);
    const Matrix<float> z_h = nn::mlp_forward(model.nets.encoder_h, Matrix<float>(x));
    const Matrix<float> z_r =
        nn::mlp_forward(model.nets.encoder_r, nn::mlp_forward(model.nets.decoder, z_h));
    sum += (z_h.cast<double>() - z_r.cast<double>()).array().abs().sum();
  }
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Training loop

bool operator==(const EpochMetrics& a, const EpochMetrics& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.epoch == b.epoch && same(a.l_triplet, b.l_triplet) && same(a.l_rec, b.l_rec) &&
         same(a.l_ltc, b.l_ltc) && same(a.total, b.total) && same(a.val_mse, b.val_mse);
}

double validation_mse(const RetargetModel& model, const ValidationSet& val) {
  if (val.humans.size() != val.references.size() || val.humans.empty()) {
    throw ValidationError("validation set needs matching, non-empty human and reference lists");
  }
  const auto x = nn::mlp_forward(model.nets.decoder,
                                 nn::mlp_forward(model.nets.encoder_h, human_inputs(val.humans)));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < val.references.size(); ++i) {
    require_robot_width(model, val.references[i]);
    for (std::size_t j = 0; j < val.references[i].joint_count(); ++j) {
      const double d = static_cast<double>(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) -
                       val.references[i][j];
      sum += d * d;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::vector<EpochMetrics> train(RetargetModel& model, const PoseBank& human, const PoseBank& robot,
                                const TrainConfig& config, const ValidationSet* val,
                                const TrainCallbacks& callbacks) {
  config.validate();
  if (config.latent_dim != model.nets.latent_dim() ||
      config.hidden_width != model.config.hidden_width ||
      config.hidden_layers != model.config.hidden_layers) {
    throw ValidationError("train config architecture does not match the model");
  }
  if (human.domain != Domain::human || human.chain_name != model.human_chain.name()) {
    throw ValidationError("human bank is not a '" + model.human_chain.name() + "' human bank");
  }
  if (robot.domain != Domain::robot || robot.chain_name != model.robot_chain.name()) {
    throw ValidationError("robot bank is not a '" + model.robot_chain.name() + "' robot bank");
  }
  std::vector<EpochMetrics> log;
  model.config = config;
  if (config.epochs == 0) {
    return log;
  }
  if (human.empty() || robot.empty()) {
    throw ValidationError("training needs non-empty human and robot banks");
  }

  auto& nets = model.nets;
  const nn::AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  auto state_h = nn::AdamState<float>::for_model(nets.encoder_h, adam);
  auto state_r = nn::AdamState<float>::for_model(nets.encoder_r, adam);
  auto state_d = nn::AdamState<float>::for_model(nets.decoder, adam);

  const std::size_t steps = config.steps_per_epoch != 0
                                ? config.steps_per_epoch
                                : (robot.size() + config.batch - 1) / config.batch;
  std::vector<std::size_t> order(robot.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> robot_rows(config.batch);
  std::vector<std::size_t> human_rows(config.batch);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, 1'000'000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    LossBreakdown sum;
    for (std::size_t step = 0; step < steps; ++step) {
      for (std::size_t k = 0; k < config.batch; ++k) {
        robot_rows[k] = order[(step * config.batch + k) % order.size()];
        human_rows[k] = rng.index(human.size());
      }
      const auto triplets = mine_triplets(human, robot, config.batch, config, rng);
      const auto batch = make_loss_batch(human, robot, triplets, robot_rows, human_rows);
      auto grads = NetworkGradients<float>::zeros_like(nets);
      const LossBreakdown loss = total_loss(nets, batch, config, &grads);
      if (!std::isfinite(loss.total) || !grads.all_finite()) {
        throw TrainingDivergedError(epoch, step, "training diverged: non-finite loss or gradient");
      }
      nn::adam_step(nets.encoder_h, state_h, grads.encoder_h);
      nn::adam_step(nets.encoder_r, state_r, grads.encoder_r);
      nn::adam_step(nets.decoder, state_d, grads.decoder);
      sum.triplet += loss.triplet;
      sum.rec += loss.rec;
      sum.ltc += loss.ltc;
      sum.total += loss.total;
    }
    const double n = static_cast<double>(steps);
    EpochMetrics m;
    m.epoch = epoch;
    m.l_triplet = sum.triplet / n;
    m.l_rec = sum.rec / n;
    m.l_ltc = sum.ltc / n;
    m.total = sum.total / n;
    m.val_mse = val ? validation_mse(model, *val) : std::numeric_limits<double>::quiet_NaN();
    log.push_back(m);
    if (callbacks.on_epoch) {
      callbacks.on_epoch(m);
    }
  }
  return log;
}

std::string metrics_csv(std::span<const EpochMetrics> log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,l_triplet,l_rec,l_ltc,total,val_mse\n";
  for (const auto& m : log) {
    out << m.epoch << ',' << m.l_triplet << ',' << m.l_rec << ',' << m.l_ltc << ',' << m.total
        << ',';
    if (!std::isnan(m.val_mse)) {
      out << m.val_mse;
    }
    out << '\n';
  }
  return out.str();
}

void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path) {
  io::write_file_atomic(path, metrics_csv(log));
}

template struct RetargetNetworks<float>;
template struct RetargetNetworks<double>;
template struct NetworkGradients<float>;
template struct NetworkGradients<double>;
template RetargetNetworks<float> make_networks<float>(std::size_t, const nn::SquashLimits&,
                                                      std::size_t, std::size_t, std::size_t,
                                                      std::uint64_t);
template RetargetNetworks<double> make_networks<double>(std::size_t, const nn::SquashLimits&,
                                                        std::size_t, std::size_t, std::size_t,
                                                        std::uint64_t);
template LossBreakdown total_loss<float>(const RetargetNetworks<float>&, const LossBatch<float>&,
                                         const TrainConfig&, NetworkGradients<float>*);
template LossBreakdown total_loss<double>(const RetargetNetworks<double>&, const LossBatch<double>&,
                                          const TrainConfig&, NetworkGradients<double>*);

}  // namespace retarget
