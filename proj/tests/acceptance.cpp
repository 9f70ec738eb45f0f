// Acceptance suite: one PASS/FAIL line per criterion. Long-running (tens of
// minutes on one core); registered with ctest under the name "acceptance".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "retarget/baseline.hpp"
#include "retarget/errors.hpp"
#include "retarget/eval.hpp"
#include "retarget/experiments.hpp"
#include "retarget/runtime.hpp"
#include "retarget/training.hpp"

using namespace retarget;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr double kGradSeconds = 30;
constexpr double kSignFlipTolerance = 1e-12;
constexpr double kLeftRotationTolerance = 1e-9;
constexpr std::size_t kMetricPairs = 10000;
constexpr double kMetricSeconds = 10;
constexpr double kReconstructionPerJoint = 0.05;
constexpr double kTrainSeconds = 15 * 60;
constexpr double kOracleFactor = 1.5;
constexpr double kRandomFactor = 0.5;
constexpr double kSemanticSeconds = 10 * 60;
constexpr double kAblationTieBand = 0.05;
constexpr double kAblationSeconds = 45 * 60;
constexpr double kBaselineFactor = 1.1;
constexpr double kBaselineSeconds = 60 * 60;
constexpr double kMinKhz = 1.0;
constexpr double kLatencySeconds = 60;
constexpr double kMaxFrameStep = 0.3;
constexpr double kInterpSeconds = 10;
constexpr std::size_t kFuzzCases = 100;
constexpr double kPersistSeconds = 60;
constexpr double kDeterminismSeconds = 3 * 60;

constexpr std::uint64_t kDeskSeed = 42;
constexpr std::size_t kRobotPoses = 200000;
constexpr std::size_t kHumanPoses = 100000;
constexpr std::size_t kHeldOutPoses = 200;
constexpr std::size_t kHeldOutRobot = 10000;
const std::vector<std::uint64_t> kBaselineSeeds{42, 43, 44};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o, double seconds) {
  std::printf("[%s] criterion %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name,
              o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  report(id, name, o, since(t));
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const char* tag, const EpochMetrics& m) {
  std::printf("  %s epoch %zu total=%.4f rec=%.4f val_mse=%.4f\n", tag, m.epoch, m.total, m.l_rec,
              m.val_mse);
  std::fflush(stdout);
}

// Banks, validation set and trained model for one seed at desk scale.
struct DeskRun {
  KinematicChain human_chain = builtin_chain("human-upper-14");
  KinematicChain robot_chain = builtin_chain("toy-robot-8");
  PoseBank human;
  PoseBank robot;
  ValidationSet val;
  std::optional<RetargetModel> model;
  std::vector<EpochMetrics> log;
  double train_seconds = 0.0;
  double val_mse = 0.0;
};

DeskRun make_desk_data(std::uint64_t seed) {
  DeskRun d;
  d.human = build_pose_bank(d.human_chain, Domain::human, kHumanPoses, derive_seed(seed, 1));
  d.robot = build_pose_bank(d.robot_chain, Domain::robot, kRobotPoses, derive_seed(seed, 2));
  d.val = make_validation_set(d.human_chain, d.robot_chain, kHeldOutPoses, derive_seed(seed, 3));
  return d;
}

TrainConfig desk_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  return c;
}

DeskRun train_desk(std::uint64_t seed) {
  DeskRun d = make_desk_data(seed);
  const auto cfg = desk_config(seed);
  d.model = make_retarget_model(d.human_chain, d.robot_chain, cfg);
  TrainCallbacks cb;
  cb.on_epoch = [](const EpochMetrics& m) { progress("desk", m); };
  const auto t = Clock::now();
  d.log = train(*d.model, d.human, d.robot, cfg, &d.val, cb);
  d.train_seconds = since(t);
  d.val_mse = validation_mse(*d.model, d.val);
  return d;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t = Clock::now();
  const auto human_chain = builtin_chain("human-upper-14");
  const auto robot_chain = builtin_chain("toy-robot-8");
  // Robot encoder widths [8, 16, 4].
  auto nets = make_networks<double>(4 * human_chain.joint_count(), joint_limits(robot_chain), 4, 16,
                                    1, 11);
  TrainConfig cfg;
  const auto hb = build_pose_bank(human_chain, Domain::human, 200, 1);
  const auto rb = build_pose_bank(robot_chain, Domain::robot, 200, 2);
  Rng rng(3);
  const auto triplets = mine_triplets(hb, rb, 16, cfg, rng);
  std::vector<std::size_t> rows_r, rows_h;
  for (std::size_t i = 0; i < 16; ++i) {
    rows_r.push_back(rng.index(rb.size()));
    rows_h.push_back(rng.index(hb.size()));
  }
  const auto fb = make_loss_batch(hb, rb, triplets, rows_r, rows_h);
  LossBatch<double> batch;
  batch.triplet_human = fb.triplet_human.cast<double>();
  batch.triplet_robot = fb.triplet_robot.cast<double>();
  for (const auto& tr : fb.triplets) {
    batch.triplets.push_back({LossBatch<double>::Item{tr[0].domain, tr[0].row},
                              LossBatch<double>::Item{tr[1].domain, tr[1].row},
                              LossBatch<double>::Item{tr[2].domain, tr[2].row}});
  }
  batch.rec_robot = fb.rec_robot.cast<double>();
  batch.ltc_human = fb.ltc_human.cast<double>();

  auto grads = NetworkGradients<double>::zeros_like(nets);
  total_loss(nets, batch, cfg, &grads);
  auto blocks = nn::parameter_blocks(nets.encoder_h, grads.encoder_h);
  for (auto b : nn::parameter_blocks(nets.encoder_r, grads.encoder_r)) blocks.push_back(b);
  for (auto b : nn::parameter_blocks(nets.decoder, grads.decoder)) blocks.push_back(b);
  const auto rep = nn::finite_diff_check(
      blocks, [&] { return total_loss(nets, batch, cfg).total; }, kGradTolerance, kGradStep);
  const double secs = since(t);
  return {rep.pass && secs < kGradSeconds,
          fmt("max relative error %.3g over %zu parameters (< %.0e), %.1f s (< %.0f s)",
              rep.max_rel_error, rep.checked, kGradTolerance, secs, kGradSeconds)};
}

Outcome metric_identities() {
  const auto t = Clock::now();
  std::mt19937_64 gen(2024);
  double flip = 0.0, left = 0.0, lo = 4.0, hi = 0.0;
  bool symmetric = true;
  for (std::size_t i = 0; i < kMetricPairs; ++i) {
    const auto a = test::random_links(gen);
    const auto b = test::random_links(gen);
    const double d = rotation_distance(a, b);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    symmetric = symmetric && d == rotation_distance(b, a);
    auto fa = a;
    const std::size_t k = i % kSemanticLinkCount;
    fa.rotations[k] = fa.rotations[k].negated();
    flip = std::max(flip, std::abs(rotation_distance(fa, b) - d));
    const auto r = test::random_quat(gen);
    auto ra = a;
    auto rb = b;
    for (std::size_t j = 0; j < kSemanticLinkCount; ++j) {
      ra.rotations[j] = r * a.rotations[j];
      rb.rotations[j] = r * b.rotations[j];
    }
    left = std::max(left, std::abs(rotation_distance(ra, rb) - d));
  }
  const double secs = since(t);
  const bool pass = flip <= kSignFlipTolerance && left <= kLeftRotationTolerance && symmetric &&
                    lo >= 0.0 && hi <= 4.0 && secs < kMetricSeconds;
  return {pass, fmt("%zu pairs: sign flip %.2g, left rotation %.2g, symmetric %s, range [%.4f, "
                    "%.4f], %.1f s",
                    kMetricPairs, flip, left, symmetric ? "yes" : "no", lo, hi, secs)};
}

Outcome reconstruction(const DeskRun& d) {
  const auto held = build_pose_bank(d.robot_chain, Domain::robot, kHeldOutRobot,
                                    derive_seed(kDeskSeed, 4));
  const double per_joint =
      mean_reconstruction_loss(*d.model, held) / static_cast<double>(d.robot_chain.joint_count());
  const bool decreasing = d.log.back().total < d.log.front().total;
  return {per_joint < kReconstructionPerJoint && decreasing && d.train_seconds < kTrainSeconds,
          fmt("held-out L1 %.4f rad/joint (< %.2f), total loss %.4f -> %.4f, training %.0f s "
              "(< %.0f s)",
              per_joint, kReconstructionPerJoint, d.log.front().total, d.log.back().total,
              d.train_seconds, kTrainSeconds)};
}

Outcome semantic(const DeskRun& d) {
  const auto t = Clock::now();
  const auto rep = eval_semantic(*d.model, d.val.humans, kOracleRestarts, derive_seed(kDeskSeed, 5));
  const double secs = since(t);
  const bool pass = rep.retarget_mean <= kOracleFactor * rep.oracle_mean &&
                    rep.retarget_mean <= kRandomFactor * rep.random_mean && secs < kSemanticSeconds;
  return {pass, fmt("mean D_GR retarget %.4f, oracle %.4f (x%.2f, need <= %.1f), random %.4f "
                    "(x%.2f, need <= %.1f), %.0f s",
                    rep.retarget_mean, rep.oracle_mean, rep.retarget_mean / rep.oracle_mean,
                    kOracleFactor, rep.random_mean, rep.retarget_mean / rep.random_mean,
                    kRandomFactor, secs)};
}

Outcome ablation(const DeskRun& d) {
  const auto t = Clock::now();
  // The full variant is the desk model itself: same seed, banks and weights.
  std::vector<AblationVariant> variants;
  for (const auto& v : ablation_variants()) {
    if (v.name != "full") variants.push_back(v);
  }
  const auto rows = run_ablation(d.human_chain, d.robot_chain, d.human, d.robot,
                                 desk_config(kDeskSeed), d.val, variants,
                                 [](const AblationVariant& v, const EpochMetrics& m) {
                                   progress(v.name.c_str(), m);
                                 });
  double no_ltc = 0.0, no_triplet = 0.0;
  for (const auto& r : rows) {
    (r.variant.name == "no_ltc" ? no_ltc : no_triplet) = r.val_mse;
  }
  const double full = d.val_mse;
  const double secs = since(t) + d.train_seconds;
  const bool first = full <= no_ltc || std::abs(full - no_ltc) <= kAblationTieBand * no_ltc;
  const bool pass = first && no_ltc < no_triplet && secs < kAblationSeconds;
  return {pass, fmt("val MSE full %.4f, no_ltc %.4f, no_triplet %.4f, %.0f s", full, no_ltc,
                    no_triplet, secs)};
}

Outcome baseline(const DeskRun& desk) {
  const auto t = Clock::now();
  double unsup = 0.0, base = 0.0;
  std::string per_seed;
  for (const auto seed : kBaselineSeeds) {
    double u = 0.0;
    std::optional<DeskRun> own;
    const DeskRun* d = &desk;
    if (seed != kDeskSeed) {
      own = train_desk(seed);
      d = &*own;
    }
    u = d->val_mse;
    const auto pairs = generate_pairs(d->human, d->robot, kDefaultPairCount, derive_seed(seed, 6));
    const auto cfg = desk_config(seed);
    auto model = make_baseline_model(d->human_chain, d->robot_chain, cfg);
    TrainCallbacks cb;
    cb.on_epoch = [](const EpochMetrics& m) { progress("baseline", m); };
    train_baseline(model, pairs, d->human, d->robot, cfg, &d->val, cb);
    const double b = baseline_validation_mse(model, d->val);
    unsup += u;
    base += b;
    per_seed += fmt(" seed %llu: %.4f vs %.4f;", static_cast<unsigned long long>(seed), u, b);
  }
  unsup /= static_cast<double>(kBaselineSeeds.size());
  base /= static_cast<double>(kBaselineSeeds.size());
  const double secs = since(t) + desk.train_seconds;
  return {unsup <= kBaselineFactor * base && secs < kBaselineSeconds,
          fmt("mean val MSE unsupervised %.4f vs baseline %.4f (ratio %.2f, need <= %.1f);%s %.0f s",
              unsup, base, unsup / base, kBaselineFactor, per_seed.c_str(), secs)};
}

Outcome throughput(const DeskRun& d) {
  const auto t = Clock::now();
  const auto rep = bench_latency(*d.model, 2000, 9);
  const double secs = since(t);
  return {rep.khz >= kMinKhz && secs < kLatencySeconds,
          fmt("%.2f kHz (>= %.1f), mean %.1f us, p99 %.1f us", rep.khz, kMinKhz, rep.mean_s * 1e6,
              rep.p99_s * 1e6)};
}

Outcome interpolation(const DeskRun& d) {
  const auto t = Clock::now();
  const std::vector<HumanPose> keys(d.val.humans.begin(), d.val.humans.begin() + 3);
  const auto trace = interpolate_keyposes(*d.model, keys, 20);
  bool endpoints = true;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto r = retarget::retarget(*d.model, keys[k]);
    const auto& frame = trace.frames[k * 19];
    endpoints = endpoints && std::equal(frame.begin(), frame.end(), r.joint_angles().begin(),
                                        r.joint_angles().end());
  }
  const double step = max_frame_step(trace);
  const double secs = since(t);
  return {endpoints && trace.frames.size() == 39 && step < kMaxFrameStep && secs < kInterpSeconds,
          fmt("%zu frames (39), endpoints bitwise %s, max step %.4f rad (< %.1f)",
              trace.frames.size(), endpoints ? "equal" : "DIFFER", step, kMaxFrameStep)};
}

Outcome persistence() {
  const auto t = Clock::now();
  const auto hc = builtin_chain("human-upper-14");
  const auto rc = builtin_chain("toy-robot-8");
  const auto hb = build_pose_bank(hc, Domain::human, 300, 1);
  const auto rb = build_pose_bank(rc, Domain::robot, 400, 2);
  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 2;
  const auto model = make_retarget_model(hc, rc, cfg);
  std::vector<HumanPose> humans;
  for (std::size_t i = 0; i < 5; ++i) humans.push_back(hb.human_pose(hc, i));
  const auto trace = make_trace(hc, 30.0, humans);
  const auto pairs = generate_pairs(hb, rb, 20, 3);

  struct Format {
    const char* name;
    std::vector<std::uint8_t> bytes;
    std::function<std::vector<std::uint8_t>(std::span<const std::uint8_t>)> reencode;
  };
  auto text_bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  std::vector<Format> formats{
      {"bank", encode_pose_bank(rb),
       [](std::span<const std::uint8_t> b) { return encode_pose_bank(decode_pose_bank(b)); }},
      {"trace", text_bytes(encode_motion_trace(trace)),
       [&](std::span<const std::uint8_t> b) {
         return text_bytes(encode_motion_trace(decode_motion_trace(
             std::string_view(reinterpret_cast<const char*>(b.data()), b.size()))));
       }},
      {"checkpoint", encode_checkpoint(model),
       [](std::span<const std::uint8_t> b) { return encode_checkpoint(decode_checkpoint(b)); }},
      {"pairs", encode_pairs(pairs),
       [](std::span<const std::uint8_t> b) { return encode_pairs(decode_pairs(b)); }},
  };
  bool stable = true;
  for (const auto& f : formats) {
    stable = stable && f.reencode(f.bytes) == f.bytes;
  }
  std::mt19937_64 gen(99);
  std::size_t detected = 0;
  for (std::size_t i = 0; i < kFuzzCases; ++i) {
    const auto& f = formats[i % formats.size()];
    auto bad = f.bytes;
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, bad.size() - 1)(gen);
    const int bit = std::uniform_int_distribution<int>(0, 7)(gen);
    bad[pos] ^= static_cast<std::uint8_t>(1u << bit);
    try {
      f.reencode(bad);
    } catch (const Error&) {
      ++detected;
    }
  }
  const double secs = since(t);
  return {stable && detected == kFuzzCases && secs < kPersistSeconds,
          fmt("round trips %s; corruption detected %zu/%zu", stable ? "bitwise stable" : "UNSTABLE",
              detected, kFuzzCases)};
}

Outcome determinism(const DeskRun& d) {
  const auto t = Clock::now();
  auto cfg = desk_config(kDeskSeed);
  cfg.epochs = 2;
  auto a = make_retarget_model(d.human_chain, d.robot_chain, cfg);
  auto b = make_retarget_model(d.human_chain, d.robot_chain, cfg);
  const auto la = train(a, d.human, d.robot, cfg, &d.val);
  const auto lb = train(b, d.human, d.robot, cfg, &d.val);
  const bool logs = la == lb && encode_checkpoint(a) == encode_checkpoint(b);
  // The desk run's first two epochs must match too.
  const bool prefix = la[0] == d.log[0] && la[1] == d.log[1];
  const auto r8 = build_pose_bank(d.robot_chain, Domain::robot, kRobotPoses,
                                  derive_seed(kDeskSeed, 2), 8);
  const auto h8 = build_pose_bank(d.human_chain, Domain::human, kHumanPoses,
                                  derive_seed(kDeskSeed, 1), 8);
  const bool banks = encode_pose_bank(r8) == encode_pose_bank(d.robot) &&
                     encode_pose_bank(h8) == encode_pose_bank(d.human);
  const double secs = since(t);
  return {logs && prefix && banks && secs < kDeterminismSeconds,
          fmt("2-epoch logs and weights identical %s, match desk run %s, banks workers 1 vs 8 "
              "identical %s, %.0f s",
              logs ? "yes" : "no", prefix ? "yes" : "no", banks ? "yes" : "no", secs)};
}

}  // namespace

int main() {
  std::printf("acceptance suite (single-threaded, seed %llu)\n",
              static_cast<unsigned long long>(kDeskSeed));
  run(1, "gradient fidelity", gradient_fidelity);
  run(2, "metric identities", metric_identities);
  run(9, "persistence", persistence);

  std::optional<DeskRun> desk;
  try {
    desk = train_desk(kDeskSeed);
  } catch (const std::exception& e) {
    std::printf("desk training failed: %s\n", e.what());
  }
  auto with_desk = [&](int id, const char* name, auto fn) {
    if (!desk) {
      report(id, name, {false, "desk training failed"}, 0.0);
      return;
    }
    run(id, name, [&] { return fn(*desk); });
  };
  with_desk(3, "reconstruction", reconstruction);
  with_desk(4, "semantic preservation", semantic);
  with_desk(7, "throughput", throughput);
  with_desk(8, "interpolation", interpolation);
  with_desk(10, "determinism", determinism);
  with_desk(5, "ablation ordering", ablation);
  with_desk(6, "baseline ordering", baseline);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
