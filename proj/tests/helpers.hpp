#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "retarget/kinematics.hpp"
#include "retarget/quat.hpp"

namespace test {

inline Eigen::Quaterniond to_eigen(const retarget::Quat& q) {
  return Eigen::Quaterniond(q.w(), q.x(), q.y(), q.z());
}

// Same rotation, either sign.
inline double rotation_gap(const retarget::Quat& a, const Eigen::Quaterniond& b) {
  const double dot = a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
  return 1.0 - std::abs(dot);
}

inline retarget::Quat random_quat(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  return retarget::Quat(n(gen), n(gen), n(gen), n(gen));
}

inline retarget::LinkRotationSet random_links(std::mt19937_64& gen) {
  retarget::LinkRotationSet s;
  for (auto& q : s.rotations) {
    q = random_quat(gen);
  }
  return s;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("retarget_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
