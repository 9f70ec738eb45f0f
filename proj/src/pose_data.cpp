#include "retarget/pose_data.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "binary_io.hpp"
#include "parallel.hpp"
#include "retarget/errors.hpp"

namespace retarget {

namespace {

constexpr char kBankMagic[8] = {'R', 'T', 'G', 'T', 'B', 'A', 'N', 'K'};
constexpr std::size_t kHeaderSize = 64;
constexpr std::size_t kChainNameWidth = 20;
constexpr std::size_t kLinkWidth = 4 * kSemanticLinkCount;

void fill_row(const KinematicChain& chain, Domain domain, std::uint64_t seed, std::size_t i,
              float* pose_out, float* links_out) {
  Rng rng(derive_seed(seed, i));
  LinkRotationSet links;
  if (domain == Domain::robot) {
    const RobotPose pose = sample_robot_pose(chain, rng);
    // Link rotations are computed from the float-rounded row so that they
    // agree with what a reader reconstructs from the file.
    std::vector<double> stored(pose.joint_count());
    for (std::size_t j = 0; j < pose.joint_count(); ++j) {
      pose_out[j] = static_cast<float>(pose[j]);
      stored[j] = pose_out[j];
    }
    links = semantic_link_rotations(chain, RobotPose(chain, std::move(stored)));
  } else {
    const HumanPose pose = sample_human_pose(chain, rng);
    const auto flat = pose.flatten();
    std::vector<double> stored(flat.size());
    for (std::size_t k = 0; k < flat.size(); ++k) {
      pose_out[k] = static_cast<float>(flat[k]);
      stored[k] = pose_out[k];
    }
    links = semantic_link_rotations(chain, HumanPose::from_components(chain, stored));
  }
  const auto l = links.flatten();
  for (std::size_t k = 0; k < kLinkWidth; ++k) {
    links_out[k] = static_cast<float>(l[k]);
  }
}

std::vector<double> widen(std::span<const float> row) { return {row.begin(), row.end()}; }

}  // namespace

std::string_view domain_name(Domain domain) noexcept {
  return domain == Domain::human ? "human" : "robot";
}

Domain parse_domain(std::string_view name) {
  if (name == "human") {
    return Domain::human;
  }
  if (name == "robot") {
    return Domain::robot;
  }
  throw ValidationError("unknown domain '" + std::string(name) + "' (expected human or robot)");
}

std::size_t pose_width(const KinematicChain& chain, Domain domain) {
  return domain == Domain::human ? 4 * chain.joint_count() : chain.joint_count();
}

RobotPose sample_robot_pose(const KinematicChain& chain, Rng& rng) {
  if (!chain.all_revolute()) {
    throw ValidationError("cannot sample robot poses on chain '" + chain.name() +
                          "': it has spherical joints");
  }
  std::vector<double> angles(chain.joint_count());
  for (std::size_t j = 0; j < angles.size(); ++j) {
    const auto& lim = chain.joint(j).limits;
    angles[j] = rng.uniform(lim.min, lim.max);
  }
  return RobotPose(chain, std::move(angles));
}

HumanPose sample_human_pose(const KinematicChain& chain, Rng& rng) {
  if (!chain.all_spherical()) {
    throw ValidationError("cannot sample human poses on chain '" + chain.name() +
                          "': it has revolute joints");
  }
  std::vector<Quat> locals;
  locals.reserve(chain.joint_count());
  for (const auto& joint : chain.joints()) {
    const Vec3 axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, joint.limits.max);
    locals.push_back(quat_from_axis_angle(axis, angle));
  }
  return HumanPose(chain, std::move(locals));
}

HumanPose PoseBank::human_pose(const KinematicChain& chain, std::size_t i) const {
  if (domain != Domain::human) {
    throw ValidationError("bank holds robot poses");
  }
  return HumanPose::from_components(chain, widen(row(i)));
}

RobotPose PoseBank::robot_pose(const KinematicChain& chain, std::size_t i) const {
  if (domain != Domain::robot) {
    throw ValidationError("bank holds human poses");
  }
  return RobotPose::checked(chain, widen(row(i)));
}

PoseBank build_pose_bank(const KinematicChain& chain, Domain domain, std::size_t count,
                         std::uint64_t seed, std::size_t workers) {
  if (count == 0) {
    throw ValidationError("pose bank count must be at least 1");
  }
  if (domain == Domain::robot && !chain.all_revolute()) {
    throw ValidationError("chain '" + chain.name() + "' cannot produce robot poses");
  }
  if (domain == Domain::human && !chain.all_spherical()) {
    throw ValidationError("chain '" + chain.name() + "' cannot produce human poses");
  }
  PoseBank bank;
  bank.domain = domain;
  bank.chain_name = chain.name();
  bank.joint_count = static_cast<std::uint32_t>(chain.joint_count());
  bank.seed = seed;
  const std::size_t width = bank.width();
  bank.poses.resize(count * width);
  bank.link_rotations.resize(count * kLinkWidth);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      fill_row(chain, domain, seed, i, bank.poses.data() + i * width,
               bank.link_rotations.data() + i * kLinkWidth);
    }
  };
  detail::parallel_ranges(count, workers, work);
  return bank;
}

void validate_pose_bank(const PoseBank& bank, const KinematicChain& chain) {
  if (bank.chain_name != chain.name()) {
    throw ValidationError("bank was generated for chain '" + bank.chain_name + "', not '" +
                          chain.name() + "'");
  }
  if (bank.joint_count != chain.joint_count()) {
    throw ValidationError("bank joint count does not match chain '" + chain.name() + "'");
  }
  if (bank.poses.size() != bank.size() * bank.width() ||
      bank.link_rotations.size() != bank.size() * kLinkWidth) {
    throw ValidationError("bank payload sizes are inconsistent");
  }
  for (std::size_t i = 0; i < bank.size(); ++i) {
    LinkRotationSet recomputed;
    try {
      if (bank.domain == Domain::human) {
        const HumanPose pose = bank.human_pose(chain, i);
        if (!pose.within_limits(chain)) {
          throw ValidationError("swing limit exceeded");
        }
        recomputed = semantic_link_rotations(chain, pose);
      } else {
        recomputed = semantic_link_rotations(chain, bank.robot_pose(chain, i));
      }
    } catch (const ValidationError& e) {
      throw ValidationError("bank row " + std::to_string(i) + ": " + e.what());
    }
    const auto expect = recomputed.flatten();
    const auto stored = bank.link_row(i);
    for (std::size_t k = 0; k < kLinkWidth; ++k) {
      if (std::abs(expect[k] - static_cast<double>(stored[k])) > 1e-6) {
        throw ValidationError("bank row " + std::to_string(i) +
                              ": stored link rotations disagree with the pose");
      }
    }
  }
}

std::vector<std::uint8_t> encode_pose_bank(const PoseBank& bank) {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kBankMagic), sizeof(kBankMagic)));
  w.u32(kPoseBankVersion);
  w.u32(static_cast<std::uint32_t>(bank.domain));
  w.u32(bank.joint_count);
  w.u32(static_cast<std::uint32_t>(bank.width()));
  w.u64(bank.size());
  w.u64(bank.seed);
  w.fixed_string(bank.chain_name, kChainNameWidth);
  const std::size_t crc_offset = w.size();
  w.u32(0);
  for (float v : bank.poses) {
    w.f32(v);
  }
  for (float v : bank.link_rotations) {
    w.f32(v);
  }
  auto& bytes = w.data();
  std::uint32_t crc = io::crc32(std::span(bytes.data(), crc_offset));
  crc = io::crc32(std::span(bytes.data() + kHeaderSize, bytes.size() - kHeaderSize), crc);
  std::memcpy(bytes.data() + crc_offset, &crc, sizeof(crc));
  return std::move(bytes);
}

PoseBank decode_pose_bank(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "pose bank");
  const std::string_view magic = r.text(sizeof(kBankMagic));
  if (magic != std::string_view(kBankMagic, sizeof(kBankMagic))) {
    throw FormatError("pose bank: bad magic, not a .bank file");
  }
  const std::uint32_t version = r.u32();
  if (version != kPoseBankVersion) {
    throw VersionError(version, kPoseBankVersion, "pose bank");
  }
  PoseBank bank;
  const std::uint32_t domain = r.u32();
  bank.joint_count = r.u32();
  const std::uint32_t width = r.u32();
  const std::uint64_t count = r.u64();
  bank.seed = r.u64();
  bank.chain_name = r.fixed_string(kChainNameWidth);
  const std::uint32_t stored_crc = r.u32();

  if (domain > 1) {
    throw ChecksumError("pose bank: corrupt header (domain tag " + std::to_string(domain) + ")");
  }
  bank.domain = static_cast<Domain>(domain);
  if (width != bank.width()) {
    throw ChecksumError("pose bank: corrupt header (row width does not match joint count)");
  }
  const std::size_t row_bytes = (std::size_t{width} + kLinkWidth) * sizeof(float);
  const std::size_t payload = bytes.size() - kHeaderSize;
  if (count > payload / row_bytes) {
    throw TruncatedError("pose bank: truncated, header declares " + std::to_string(count) +
                         " rows but the payload holds " + std::to_string(payload / row_bytes));
  }
  if (payload != count * row_bytes) {
    throw ChecksumError("pose bank: " + std::to_string(payload - count * row_bytes) +
                        " unexpected bytes after payload");
  }
  std::uint32_t crc = io::crc32(bytes.subspan(0, kHeaderSize - sizeof(std::uint32_t)));
  crc = io::crc32(bytes.subspan(kHeaderSize), crc);
  if (crc != stored_crc) {
    throw ChecksumError("pose bank: checksum mismatch, file is corrupt");
  }
  bank.poses.resize(count * width);
  bank.link_rotations.resize(count * kLinkWidth);
  for (auto& v : bank.poses) {
    v = r.f32();
  }
  for (auto& v : bank.link_rotations) {
    v = r.f32();
  }
  return bank;
}

void save_pose_bank(const PoseBank& bank, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_pose_bank(bank));
}

PoseBank load_pose_bank(const std::filesystem::path& path) {
  return decode_pose_bank(io::read_file(path));
}

// ---------------------------------------------------------------------------

void validate_motion_trace(const MotionTrace& trace, const KinematicChain& chain) {
  if (trace.chain_name != chain.name()) {
    throw ValidationError("trace is for chain '" + trace.chain_name + "', expected '" +
                          chain.name() + "'");
  }
  if (!(trace.frame_rate > 0.0) || !std::isfinite(trace.frame_rate)) {
    throw ValidationError("trace frame_rate must be positive");
  }
  if (trace.frames.empty()) {
    throw ValidationError("empty trace");
  }
  const bool human = chain.all_spherical();
  for (std::size_t f = 0; f < trace.frames.size(); ++f) {
    try {
      if (human) {
        HumanPose::from_components(chain, trace.frames[f]);
      } else {
        RobotPose::checked(chain, trace.frames[f]);
      }
    } catch (const ValidationError& e) {
      throw ValidationError("trace frame " + std::to_string(f) + ": " + e.what());
    }
  }
}

MotionTrace make_trace(const KinematicChain& chain, double frame_rate,
                       std::span<const HumanPose> poses) {
  MotionTrace trace{chain.name(), frame_rate, {}};
  for (const auto& p : poses) {
    trace.frames.push_back(p.flatten());
  }
  return trace;
}

MotionTrace make_trace(const KinematicChain& chain, double frame_rate,
                       std::span<const RobotPose> poses) {
  MotionTrace trace{chain.name(), frame_rate, {}};
  for (const auto& p : poses) {
    trace.frames.emplace_back(p.joint_angles().begin(), p.joint_angles().end());
  }
  return trace;
}

std::vector<HumanPose> trace_human_poses(const MotionTrace& trace, const KinematicChain& chain) {
  validate_motion_trace(trace, chain);
  std::vector<HumanPose> poses;
  for (const auto& frame : trace.frames) {
    poses.push_back(HumanPose::from_components(chain, frame));
  }
  return poses;
}

std::vector<RobotPose> trace_robot_poses(const MotionTrace& trace, const KinematicChain& chain) {
  validate_motion_trace(trace, chain);
  std::vector<RobotPose> poses;
  for (const auto& frame : trace.frames) {
    poses.push_back(RobotPose::checked(chain, frame));
  }
  return poses;
}

namespace {

std::uint32_t trace_crc(const std::string& chain, double frame_rate, std::string_view body) {
  std::uint32_t crc = io::crc32(chain);
  const auto bits = std::bit_cast<std::uint64_t>(frame_rate);
  crc = io::crc32(std::span(reinterpret_cast<const std::uint8_t*>(&bits), sizeof(bits)), crc);
  return io::crc32(body, crc);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

}  // namespace

std::string encode_motion_trace(const MotionTrace& trace) {
  std::string body;
  for (const auto& frame : trace.frames) {
    body += nlohmann::json(frame).dump();
    body += '\n';
  }
  nlohmann::ordered_json header;
  header["chain"] = trace.chain_name;
  header["frame_rate"] = trace.frame_rate;
  header["crc32"] = hex32(trace_crc(trace.chain_name, trace.frame_rate, body));
  return header.dump() + '\n' + body;
}

MotionTrace decode_motion_trace(std::string_view text) {
  const auto nl = text.find('\n');
  if (nl == std::string_view::npos) {
    throw ValidationError("trace: missing header line");
  }
  MotionTrace trace;
  std::optional<std::string> crc;
  try {
    const auto header = nlohmann::json::parse(text.substr(0, nl));
    if (!header.is_object()) {
      throw ValidationError("trace: header line must be a JSON object");
    }
    for (const auto& [key, value] : header.items()) {
      if (key == "chain") {
        trace.chain_name = value.get<std::string>();
      } else if (key == "frame_rate") {
        trace.frame_rate = value.get<double>();
      } else if (key == "crc32") {
        crc = value.get<std::string>();
      } else {
        throw ValidationError("trace: unknown header field '" + key + "'");
      }
    }
    if (!header.contains("chain") || !header.contains("frame_rate")) {
      throw ValidationError("trace: header needs chain and frame_rate");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("trace header: ") + e.what());
  }
  const std::string_view body = text.substr(nl + 1);
  if (crc && *crc != hex32(trace_crc(trace.chain_name, trace.frame_rate, body))) {
    throw ChecksumError("trace: checksum mismatch, file is corrupt");
  }
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto end = body.find('\n', pos);
    if (end == std::string_view::npos) {
      end = body.size();
    }
    const auto line = body.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      continue;
    }
    try {
      trace.frames.push_back(nlohmann::json::parse(line).get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("trace frame " + std::to_string(trace.frames.size()) + ": " +
                            e.what());
    }
  }
  if (trace.frames.empty()) {
    throw ValidationError("empty trace");
  }
  return trace;
}

void save_motion_trace(const MotionTrace& trace, const std::filesystem::path& path) {
  if (trace.frames.empty()) {
    throw ValidationError("empty trace");
  }
  io::write_file_atomic(path, encode_motion_trace(trace));
}

MotionTrace load_motion_trace(const std::filesystem::path& path, const KinematicChain& chain) {
  const auto bytes = io::read_file(path);
  MotionTrace trace =
      decode_motion_trace(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  validate_motion_trace(trace, chain);
  return trace;
}

MotionTrace load_motion_trace(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  MotionTrace trace =
      decode_motion_trace(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  validate_motion_trace(trace, builtin_chain(trace.chain_name));
  return trace;
}

}  // namespace retarget
