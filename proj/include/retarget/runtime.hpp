#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "retarget/kinematics.hpp"
#include "retarget/pose_data.hpp"
#include "retarget/training.hpp"

namespace retarget {

// Point in the shared latent space.
struct LatentCode {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

// Throw ValidationError when the pose does not fit the model's chain.
LatentCode encode_human(const RetargetModel& model, const HumanPose& pose);
LatentCode encode_robot(const RetargetModel& model, const RobotPose& pose);

// Throws NonFiniteError for non-finite codes and ShapeMismatchError for a
// wrong width. The result is always inside the joint limits.
RobotPose decode_to_robot(const RetargetModel& model, const LatentCode& z);

// decode_to_robot(encode_human(pose))
RobotPose retarget(const RetargetModel& model, const HumanPose& pose);

// Same as calling retarget per pose, evaluated as one batch.
std::vector<RobotPose> retarget_batch(const RetargetModel& model, std::span<const HumanPose> poses);

// Linear interpolation between consecutive key poses in latent space with
// t = i / (steps - 1). Segments share their boundary frame, so the result has
// (keyposes - 1) * (steps - 1) + 1 frames.
MotionTrace interpolate_keyposes(const RetargetModel& model, std::span<const HumanPose> keyposes,
                                 std::size_t steps_per_segment, double frame_rate = 30.0);

// Frame-wise retarget of a human trace; keeps frame rate and order.
MotionTrace retarget_trace(const RetargetModel& model, const MotionTrace& human_trace);

// Largest absolute change of any joint between consecutive frames.
double max_frame_step(const MotionTrace& trace);

}  // namespace retarget
