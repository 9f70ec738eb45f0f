#include "retarget/runtime.hpp"

#include <algorithm>
#include <cmath>

#include "retarget/errors.hpp"

namespace retarget {

namespace {

void check_human(const RetargetModel& model, const HumanPose& pose) {
  if (pose.joint_count() != model.human_chain.joint_count()) {
    throw ValidationError("human pose has " + std::to_string(pose.joint_count()) +
                          " joints but chain '" + model.human_chain.name() + "' has " +
                          std::to_string(model.human_chain.joint_count()));
  }
}

LatentCode to_code(const nn::Matrix<float>& z, Eigen::Index row) {
  LatentCode code;
  code.values.resize(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    code.values[static_cast<std::size_t>(i)] = static_cast<double>(z(row, i));
  }
  return code;
}

RobotPose to_pose(const RetargetModel& model, const nn::Matrix<float>& x, Eigen::Index row) {
  std::vector<double> angles(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    angles[static_cast<std::size_t>(j)] = static_cast<double>(x(row, j));
  }
  return RobotPose(model.robot_chain, std::move(angles));
}

}  // namespace

LatentCode encode_human(const RetargetModel& model, const HumanPose& pose) {
  check_human(model, pose);
  return to_code(nn::mlp_forward(model.nets.encoder_h, human_inputs(std::span(&pose, 1))), 0);
}

LatentCode encode_robot(const RetargetModel& model, const RobotPose& pose) {
  if (pose.joint_count() != model.robot_chain.joint_count()) {
    throw ValidationError("robot pose has " + std::to_string(pose.joint_count()) +
                          " joints but chain '" + model.robot_chain.name() + "' has " +
                          std::to_string(model.robot_chain.joint_count()));
  }
  return to_code(nn::mlp_forward(model.nets.encoder_r, robot_inputs(std::span(&pose, 1))), 0);
}

RobotPose decode_to_robot(const RetargetModel& model, const LatentCode& z) {
  if (z.size() != model.nets.latent_dim()) {
    throw ShapeMismatchError("latent code has " + std::to_string(z.size()) +
                             " values, model expects " + std::to_string(model.nets.latent_dim()));
  }
  nn::Matrix<float> m(1, static_cast<Eigen::Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z.values[i])) {
      throw NonFiniteError("latent code value " + std::to_string(i) + " is not finite");
    }
    m(0, static_cast<Eigen::Index>(i)) = static_cast<float>(z.values[i]);
  }
  return to_pose(model, nn::mlp_forward(model.nets.decoder, m), 0);
}

RobotPose retarget(const RetargetModel& model, const HumanPose& pose) {
  return decode_to_robot(model, encode_human(model, pose));
}

std::vector<RobotPose> retarget_batch(const RetargetModel& model, std::span<const HumanPose> poses) {
  std::vector<RobotPose> out;
  if (poses.empty()) {
    return out;
  }
  for (const auto& p : poses) {
    check_human(model, p);
  }
  const auto x = nn::mlp_forward(model.nets.decoder,
                                 nn::mlp_forward(model.nets.encoder_h, human_inputs(poses)));
  out.reserve(poses.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.push_back(to_pose(model, x, i));
  }
  return out;
}

MotionTrace interpolate_keyposes(const RetargetModel& model, std::span<const HumanPose> keyposes,
                                 std::size_t steps_per_segment, double frame_rate) {
  if (keyposes.size() < 2) {
    throw ValidationError("interpolation needs at least 2 key poses, got " +
                          std::to_string(keyposes.size()));
  }
  if (steps_per_segment < 2) {
    throw ValidationError("interpolation needs at least 2 steps per segment");
  }
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) {
    throw ValidationError("frame rate must be positive");
  }
  std::vector<LatentCode> codes;
  codes.reserve(keyposes.size());
  for (const auto& k : keyposes) {
    codes.push_back(encode_human(model, k));
  }
  std::vector<RobotPose> frames;
  frames.push_back(decode_to_robot(model, codes.front()));
  const double last = static_cast<double>(steps_per_segment - 1);
  for (std::size_t s = 0; s + 1 < codes.size(); ++s) {
    const auto& a = codes[s];
    const auto& b = codes[s + 1];
    for (std::size_t i = 1; i < steps_per_segment; ++i) {
      if (i + 1 == steps_per_segment) {
        frames.push_back(decode_to_robot(model, b));
        continue;
      }
      const double t = static_cast<double>(i) / last;
      LatentCode z;
      z.values.resize(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) {
        z.values[k] = a.values[k] + t * (b.values[k] - a.values[k]);
      }
      frames.push_back(decode_to_robot(model, z));
    }
  }
  return make_trace(model.robot_chain, frame_rate, frames);
}

MotionTrace retarget_trace(const RetargetModel& model, const MotionTrace& human_trace) {
  if (human_trace.chain_name != model.human_chain.name()) {
    throw ValidationError("trace chain '" + human_trace.chain_name +
                          "' does not match the model's human chain '" +
                          model.human_chain.name() + "'");
  }
  const auto humans = trace_human_poses(human_trace, model.human_chain);
  std::vector<RobotPose> out;
  out.reserve(humans.size());
  for (std::size_t i = 0; i < humans.size(); ++i) {
    try {
      out.push_back(retarget(model, humans[i]));
    } catch (const ValidationError& e) {
      throw ValidationError("trace frame " + std::to_string(i) + ": " + e.what());
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("trace frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return make_trace(model.robot_chain, human_trace.frame_rate, out);
}

double max_frame_step(const MotionTrace& trace) {
  double worst = 0.0;
  for (std::size_t f = 1; f < trace.frames.size(); ++f) {
    const auto& a = trace.frames[f - 1];
    const auto& b = trace.frames[f];
    if (a.size() != b.size()) {
      throw ShapeMismatchError("trace frames " + std::to_string(f - 1) + " and " +
                               std::to_string(f) + " differ in width");
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      worst = std::max(worst, std::abs(b[j] - a[j]));
    }
  }
  return worst;
}

}  // namespace retarget
