#include "retarget/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "binary_io.hpp"
#include "retarget/baseline.hpp"
#include "retarget/errors.hpp"
#include "retarget/eval.hpp"
#include "retarget/experiments.hpp"
#include "retarget/runtime.hpp"

namespace retarget::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kDefaultRobotCount = 200000;
constexpr std::size_t kDefaultHumanCount = 100000;
constexpr std::size_t kDefaultValidationCount = 200;

struct Common {
  std::string chain;
  std::string human_chain = "human-upper-14";
  std::string domain = "robot";
  std::size_t count = 0;
  std::uint64_t seed = 42;
  std::string out;
  std::string model;
  std::string in;
  std::size_t workers = 1;
  std::size_t budget = kOracleRestarts;
  std::size_t steps = 0;
  std::string human_bank;
  std::string robot_bank;
  std::string pairs;
  std::string metrics;
  std::size_t human_count = kDefaultHumanCount;
  std::size_t robot_count = kDefaultRobotCount;
  std::size_t val_count = kDefaultValidationCount;
  TrainConfig train;
};

fs::path data_dir() {
  const char* env = std::getenv("RETARGET_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path output_path(const std::string& flag, const std::string& default_name) {
  fs::path p = flag.empty() ? data_dir() / default_name : fs::path(flag);
  if (p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  return p;
}

fs::path input_path(const std::string& flag, const char* what) {
  if (flag.empty()) {
    throw ValidationError(std::string("missing ") + what);
  }
  if (!fs::exists(flag)) {
    throw ValidationError(std::string(what) + " '" + flag + "' does not exist");
  }
  return flag;
}

class Manifest {
 public:
  explicit Manifest(std::string subcommand)
      : subcommand_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {}

  json& config() { return config_; }
  void input(const std::string& name, const fs::path& p) { inputs_[name] = p.string(); }
  void output(const std::string& name, const fs::path& p) { outputs_[name] = p.string(); }

  // Written next to `artifact` as <artifact>.manifest.json.
  void write(const fs::path& artifact, std::uint64_t seed) const {
    json j;
    j["subcommand"] = subcommand_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_file_atomic(fs::path(artifact.string() + ".manifest.json"), j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::chrono::steady_clock::time_point start_;
  json config_ = json::object();
  json inputs_ = json::object();
  json outputs_ = json::object();
};

std::string file_magic(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  char buf[8] = {};
  f.read(buf, sizeof buf);
  return std::string(buf, static_cast<std::size_t>(f.gcount()));
}

void add_train_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--epochs", c.train.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", c.train.batch, "Batch size")->capture_default_str();
  cmd->add_option("--lr", c.train.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--alpha", c.train.alpha, "Triplet margin")->capture_default_str();
  cmd->add_option("--lambda-triplet", c.train.lambda_triplet, "Triplet loss weight")
      ->capture_default_str();
  cmd->add_option("--lambda-rec", c.train.lambda_rec, "Reconstruction loss weight")
      ->capture_default_str();
  cmd->add_option("--lambda-ltc", c.train.lambda_ltc, "Latent consistency loss weight")
      ->capture_default_str();
  cmd->add_option("--steps", c.train.steps_per_epoch,
                  "Optimizer steps per epoch (0: one pass over the data)")
      ->capture_default_str();
}

void add_bank_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--chain", c.chain, "Robot chain (builtin name or JSON path)")
      ->default_str("toy-robot-8");
  cmd->add_option("--human-chain", c.human_chain, "Human chain (builtin name or JSON path)")
      ->capture_default_str();
  cmd->add_option("--human-bank", c.human_bank, "Human pose bank (generated when omitted)");
  cmd->add_option("--robot-bank", c.robot_bank, "Robot pose bank (generated when omitted)");
  cmd->add_option("--human-count", c.human_count, "Size of a generated human bank")
      ->capture_default_str();
  cmd->add_option("--robot-count", c.robot_count, "Size of a generated robot bank")
      ->capture_default_str();
  cmd->add_option("--val-count", c.val_count, "Held-out validation poses")->capture_default_str();
  cmd->add_option("--budget", c.budget, "Oracle restarts for validation references")
      ->capture_default_str();
}

struct Banks {
  KinematicChain human_chain;
  KinematicChain robot_chain;
  PoseBank human;
  PoseBank robot;
};

PoseBank bank_or_generate(const std::string& path, const KinematicChain& chain, Domain domain,
                          std::size_t count, std::uint64_t seed, std::size_t workers,
                          Manifest& manifest, const char* name) {
  if (!path.empty()) {
    auto bank = load_pose_bank(input_path(path, name));
    validate_pose_bank(bank, chain);
    if (bank.domain != domain) {
      throw ValidationError(std::string(name) + " '" + path + "' holds " +
                            std::string(domain_name(bank.domain)) + " poses");
    }
    manifest.input(name, path);
    return bank;
  }
  manifest.config()[std::string(name) + "_generated"] = {{"count", count}, {"seed", seed}};
  return build_pose_bank(chain, domain, count, seed, workers);
}

Banks load_banks(const Common& c, Manifest& manifest) {
  auto hc = resolve_chain(c.human_chain);
  auto rc = resolve_chain(c.chain.empty() ? "toy-robot-8" : c.chain);
  auto human = bank_or_generate(c.human_bank, hc, Domain::human, c.human_count,
                                derive_seed(c.seed, 1), c.workers, manifest, "human_bank");
  auto robot = bank_or_generate(c.robot_bank, rc, Domain::robot, c.robot_count,
                                derive_seed(c.seed, 2), c.workers, manifest, "robot_bank");
  return {std::move(hc), std::move(rc), std::move(human), std::move(robot)};
}

ValidationSet validation_for(const Banks& b, const Common& c) {
  return make_validation_set(b.human_chain, b.robot_chain, c.val_count, derive_seed(c.seed, 3),
                             c.budget, c.workers);
}

void print_epoch(std::ostream& out, const EpochMetrics& m) {
  out << "epoch " << m.epoch << " l_triplet=" << m.l_triplet << " l_rec=" << m.l_rec
      << " l_ltc=" << m.l_ltc << " total=" << m.total << " val_mse=" << m.val_mse << '\n'
      << std::flush;
}

json config_json(const TrainConfig& config) { return json::parse(config.to_json()); }

// ---------------------------------------------------------------------------

int cmd_gen_bank(const Common& c, std::ostream& out) {
  if (c.chain.empty()) {
    throw ValidationError("gen-bank needs --chain");
  }
  Manifest manifest("gen-bank");
  const auto chain = resolve_chain(c.chain);
  const Domain domain = parse_domain(c.domain);
  const std::size_t count =
      c.count != 0 ? c.count : (domain == Domain::robot ? kDefaultRobotCount : kDefaultHumanCount);
  const auto path = output_path(c.out, chain.name() + "." + std::string(domain_name(domain)) + ".bank");
  const auto bank = build_pose_bank(chain, domain, count, c.seed, c.workers);
  save_pose_bank(bank, path);
  manifest.config() = {{"chain", chain.name()}, {"domain", domain_name(domain)},
                       {"count", count}, {"workers", c.workers}};
  manifest.output("bank", path);
  manifest.write(path, c.seed);
  out << "wrote " << bank.size() << " " << domain_name(domain) << " poses to " << path.string()
      << '\n';
  return 0;
}

int cmd_train(Common c, std::ostream& out) {
  Manifest manifest("train");
  c.train.seed = c.seed;
  const auto banks = load_banks(c, manifest);
  const auto val = validation_for(banks, c);
  auto model = make_retarget_model(banks.human_chain, banks.robot_chain, c.train);
  const auto path = output_path(c.out, "model.rtm");
  const fs::path metrics = c.metrics.empty() ? fs::path(path.string() + ".metrics.csv") : fs::path(c.metrics);
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&out](const EpochMetrics& m) { print_epoch(out, m); };
  const auto log = train(model, banks.human, banks.robot, c.train, &val, callbacks);
  save_checkpoint(model, path);
  write_metrics_csv(log, metrics);
  manifest.config()["train"] = config_json(c.train);
  manifest.config()["human_chain"] = banks.human_chain.name();
  manifest.config()["robot_chain"] = banks.robot_chain.name();
  manifest.config()["val_count"] = c.val_count;
  manifest.config()["budget"] = c.budget;
  manifest.output("model", path);
  manifest.output("metrics", metrics);
  manifest.write(path, c.seed);
  out << "wrote model to " << path.string() << '\n';
  return 0;
}

RetargetModel load_model(const Common& c, Manifest& manifest) {
  const auto path = input_path(c.model, "model (--model)");
  manifest.input("model", path);
  if (!c.chain.empty()) {
    return load_checkpoint(path, resolve_chain(c.chain));
  }
  return load_checkpoint(path);
}

int cmd_retarget(const Common& c, std::ostream& out) {
  Manifest manifest("retarget");
  const auto model = load_model(c, manifest);
  const auto in = input_path(c.in, "input trace (--in)");
  manifest.input("trace", in);
  const auto human = load_motion_trace(in, model.human_chain);
  const auto robot = retarget_trace(model, human);
  const auto path = output_path(c.out, "retargeted.trace");
  save_motion_trace(robot, path);
  manifest.output("trace", path);
  manifest.write(path, c.seed);
  out << "retargeted " << robot.frames.size() << " frames; max per-frame joint change "
      << max_frame_step(robot) << " rad\n";
  return 0;
}

int cmd_interpolate(const Common& c, std::size_t steps, std::ostream& out) {
  Manifest manifest("interpolate");
  const auto model = load_model(c, manifest);
  const auto in = input_path(c.in, "key pose trace (--in)");
  manifest.input("keyposes", in);
  const auto keys = load_motion_trace(in, model.human_chain);
  const auto humans = trace_human_poses(keys, model.human_chain);
  const auto trace = interpolate_keyposes(model, humans, steps, keys.frame_rate);
  const auto path = output_path(c.out, "interpolated.trace");
  save_motion_trace(trace, path);
  manifest.config()["steps_per_segment"] = steps;
  manifest.output("trace", path);
  manifest.write(path, c.seed);
  out << "wrote " << trace.frames.size() << " frames; max per-step joint change "
      << max_frame_step(trace) << " rad\n";
  return 0;
}

int cmd_evaluate(const Common& c, std::ostream& out) {
  Manifest manifest("evaluate");
  const auto model = load_model(c, manifest);
  EvalOptions options;
  options.poses = c.count != 0 ? c.count : options.poses;
  options.budget = c.budget;
  options.seed = c.seed;
  options.workers = c.workers;
  const auto report = evaluate(model, options);
  const auto path = output_path(c.out, "eval.json");
  const fs::path csv = path.string() + ".rows.csv";
  io::write_file_atomic(path, report.to_json());
  io::write_file_atomic(csv, report.rows_csv());
  manifest.config() = {{"poses", options.poses}, {"budget", options.budget},
                       {"triplets", options.triplets}, {"latency_calls", options.latency_calls}};
  manifest.output("report", path);
  manifest.output("rows", csv);
  manifest.write(path, c.seed);
  out << report.to_json();
  return 0;
}

int cmd_oracle(const Common& c, std::ostream& out) {
  Manifest manifest("oracle");
  const auto rc = resolve_chain(c.chain.empty() ? "toy-robot-8" : c.chain);
  const auto hc = resolve_chain(c.human_chain);
  const auto in = input_path(c.in, "human trace (--in)");
  manifest.input("trace", in);
  const auto trace = load_motion_trace(in, hc);
  const auto humans = trace_human_poses(trace, hc);
  const auto results = oracle_batch(rc, hc, humans, c.budget, c.seed, c.workers);
  std::vector<RobotPose> poses;
  double mean = 0.0;
  for (const auto& r : results) {
    poses.push_back(r.pose);
    mean += r.distance;
  }
  mean /= static_cast<double>(results.size());
  const auto path = output_path(c.out, "oracle.trace");
  save_motion_trace(make_trace(rc, trace.frame_rate, poses), path);
  manifest.config() = {{"robot_chain", rc.name()}, {"human_chain", hc.name()}, {"budget", c.budget}};
  manifest.output("trace", path);
  manifest.write(path, c.seed);
  out << "oracle solved " << results.size() << " frames; mean rotation distance " << mean << '\n';
  return 0;
}

int cmd_pairgen(const Common& c, std::ostream& out) {
  Manifest manifest("pairgen");
  const auto human = load_pose_bank(input_path(c.human_bank, "human bank (--human-bank)"));
  const auto robot = load_pose_bank(input_path(c.robot_bank, "robot bank (--robot-bank)"));
  manifest.input("human_bank", c.human_bank);
  manifest.input("robot_bank", c.robot_bank);
  const std::size_t count = c.count != 0 ? c.count : kDefaultPairCount;
  const auto pairs = generate_pairs(human, robot, count, c.seed, c.workers);
  const auto path = output_path(c.out, "paired.pairs");
  save_pairs(pairs, path);
  manifest.config() = {{"count", count}, {"workers", c.workers}};
  manifest.output("pairs", path);
  manifest.write(path, c.seed);
  double mean = 0.0;
  for (const double d : pairs.distances) {
    mean += d;
  }
  out << "wrote " << pairs.size() << " pairs; mean rotation distance "
      << mean / static_cast<double>(pairs.size()) << '\n';
  return 0;
}

int cmd_train_baseline(Common c, std::ostream& out) {
  Manifest manifest("train-baseline");
  c.train.seed = c.seed;
  const auto pairs = load_pairs(input_path(c.pairs, "pairs (--pairs)"));
  manifest.input("pairs", c.pairs);
  if (c.human_bank.empty() || c.robot_bank.empty()) {
    throw ValidationError("train-baseline needs the --human-bank and --robot-bank used by pairgen");
  }
  const auto banks = load_banks(c, manifest);
  validate_pairs(pairs, banks.human, banks.robot);
  const auto val = validation_for(banks, c);
  auto model = make_baseline_model(banks.human_chain, banks.robot_chain, c.train);
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&out](const EpochMetrics& m) { print_epoch(out, m); };
  const auto log = train_baseline(model, pairs, banks.human, banks.robot, c.train, &val, callbacks);
  const auto path = output_path(c.out, "baseline.rtb");
  const fs::path metrics = c.metrics.empty() ? fs::path(path.string() + ".metrics.csv") : fs::path(c.metrics);
  save_baseline(model, path);
  write_metrics_csv(log, metrics);
  manifest.config()["train"] = config_json(c.train);
  manifest.output("model", path);
  manifest.output("metrics", metrics);
  manifest.write(path, c.seed);
  out << "wrote baseline model to " << path.string() << '\n';
  return 0;
}

int cmd_bench(const Common& c, std::ostream& out) {
  const auto path = input_path(c.model, "model (--model)");
  const std::size_t n = c.count != 0 ? c.count : 2000;
  LatencyReport r;
  if (file_magic(path) == "RTGTBASE") {
    const auto model = load_baseline(path);
    r = bench_latency(
        model.human_chain, [&model](const HumanPose& p) { (void)baseline_retarget(model, p); }, n,
        c.seed);
  } else {
    r = bench_latency(load_checkpoint(path), n, c.seed);
  }
  json j;
  j["calls"] = r.calls;
  j["mean_s"] = r.mean_s;
  j["p99_s"] = r.p99_s;
  j["khz"] = r.khz;
  out << j.dump(2) << '\n';
  if (!c.out.empty()) {
    const auto dst = output_path(c.out, "bench.json");
    io::write_file_atomic(dst, j.dump(2) + "\n");
    Manifest manifest("bench");
    manifest.input("model", path);
    manifest.output("report", dst);
    manifest.write(dst, c.seed);
  }
  return 0;
}

int cmd_ablate(Common c, std::ostream& out) {
  Manifest manifest("ablate");
  c.train.seed = c.seed;
  const auto banks = load_banks(c, manifest);
  const auto val = validation_for(banks, c);
  const auto variants = ablation_variants();
  const auto rows = run_ablation(banks.human_chain, banks.robot_chain, banks.human, banks.robot,
                                 c.train, val, variants,
                                 [&out](const AblationVariant& v, const EpochMetrics& m) {
                                   out << v.name << ' ';
                                   print_epoch(out, m);
                                 });
  const auto path = output_path(c.out, "ablation.csv");
  io::write_file_atomic(path, ablation_csv(rows));
  manifest.config()["train"] = config_json(c.train);
  manifest.config()["val_count"] = c.val_count;
  manifest.output("table", path);
  manifest.write(path, c.seed);
  out << ablation_csv(rows);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised human-to-robot pose retargeting", "retarget"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Common c;
  std::size_t interp_steps = 20;

  auto* gen = app.add_subcommand("gen-bank", "Sample a pose bank");
  gen->add_option("--chain", c.chain, "Chain (builtin name or JSON path)")->required();
  gen->add_option("--domain", c.domain, "human or robot")->capture_default_str();
  gen->add_option("--count", c.count, "Poses (default 200000 robot, 100000 human)");

  auto* tr = app.add_subcommand("train", "Train the shared latent model");
  add_bank_flags(tr, c);
  add_train_flags(tr, c);
  tr->add_option("--metrics", c.metrics, "Metrics CSV path (default <out>.metrics.csv)");

  auto* rt = app.add_subcommand("retarget", "Retarget a human motion trace");
  rt->add_option("--model", c.model, "Checkpoint (.rtm)")->required();
  rt->add_option("--in", c.in, "Human trace")->required();
  rt->add_option("--chain", c.chain, "Expected robot chain");

  auto* ip = app.add_subcommand("interpolate", "Interpolate key poses in latent space");
  ip->add_option("--model", c.model, "Checkpoint (.rtm)")->required();
  ip->add_option("--in", c.in, "Human trace whose frames are the key poses")->required();
  ip->add_option("--steps", interp_steps, "Frames per segment, endpoints included")
      ->capture_default_str();
  ip->add_option("--chain", c.chain, "Expected robot chain");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint against the oracle");
  ev->add_option("--model", c.model, "Checkpoint (.rtm)")->required();
  ev->add_option("--count", c.count, "Held-out human poses (default 200)");
  ev->add_option("--budget", c.budget, "Oracle restarts")->capture_default_str();
  ev->add_option("--chain", c.chain, "Expected robot chain");

  auto* orc = app.add_subcommand("oracle", "Solve a human trace with the rotation-distance oracle");
  orc->add_option("--chain", c.chain, "Robot chain")->default_str("toy-robot-8");
  orc->add_option("--human-chain", c.human_chain, "Human chain")->capture_default_str();
  orc->add_option("--in", c.in, "Human trace")->required();
  orc->add_option("--budget", c.budget, "Oracle restarts")->capture_default_str();

  auto* pg = app.add_subcommand("pairgen", "Pair human poses with their nearest robot poses");
  pg->add_option("--human-bank", c.human_bank, "Human pose bank")->required();
  pg->add_option("--robot-bank", c.robot_bank, "Robot pose bank")->required();
  pg->add_option("--count", c.count, "Pairs (default 20000)");

  auto* tb = app.add_subcommand("train-baseline", "Train the supervised paired baseline");
  tb->add_option("--pairs", c.pairs, "Paired dataset (.pairs)")->required();
  add_bank_flags(tb, c);
  add_train_flags(tb, c);
  tb->add_option("--metrics", c.metrics, "Metrics CSV path (default <out>.metrics.csv)");

  auto* be = app.add_subcommand("bench", "Measure single-pose retarget latency");
  be->add_option("--model", c.model, "Checkpoint (.rtm) or baseline model")->required();
  be->add_option("--count", c.count, "Timed calls (default 2000, at least 1000)");

  auto* ab = app.add_subcommand("ablate", "Train the three loss ablations with a shared seed");
  add_bank_flags(ab, c);
  add_train_flags(ab, c);

  for (auto* sub : {gen, tr, rt, ip, ev, orc, pg, tb, be, ab}) {
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", c.out, "Output path (default under $RETARGET_DATA_DIR or .)");
    sub->add_option("--workers", c.workers, "Worker threads for data-parallel sections")
        ->capture_default_str();
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }

  try {
    if (c.workers == 0) {
      throw ValidationError("--workers must be at least 1");
    }
    if (*gen) return cmd_gen_bank(c, out);
    if (*tr) return cmd_train(c, out);
    if (*rt) return cmd_retarget(c, out);
    if (*ip) return cmd_interpolate(c, interp_steps, out);
    if (*ev) return cmd_evaluate(c, out);
    if (*orc) return cmd_oracle(c, out);
    if (*pg) return cmd_pairgen(c, out);
    if (*tb) return cmd_train_baseline(c, out);
    if (*be) return cmd_bench(c, out);
    if (*ab) return cmd_ablate(c, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace retarget::cli
