#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace imucal {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Bad or inconsistent user input (files, configs, malformed datasets).
/// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical breakdown (indefinite normal system, diverging iteration, ...).
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One 9-DoF sample: accelerometer (specific force, m/s^2), gyroscope
/// (rad/s) and magnetometer (normalized field units) sharing a timestamp.
struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  Vec3 mag = Vec3::Zero();
};

/// Time-ordered sample stream at a nominally constant rate.
struct ImuDataset {
  std::vector<ImuSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const ImuSample& operator[](std::size_t i) const { return samples[i]; }
  ImuSample& operator[](std::size_t i) { return samples[i]; }

  double duration() const {
    return empty() ? 0.0 : samples.back().t - samples.front().t;
  }

  /// Median timestep. Throws InputError on fewer than 2 samples.
  double nominal_dt() const;

  /// Checks strictly increasing timestamps and bounded jitter: any step
  /// exceeding (1 + jitter_tol) * nominal_dt is treated as a gap error.
  void validate(double jitter_tol = 0.1) const;

  /// Index of the last sample with t <= query (samples must be ordered).
  std::size_t index_at_or_before(double t_query) const;
};

/// Per-axis measurement noise (standard deviations) plus the pseudo
/// measurement noise assigned to approximate loop closures.
struct NoiseModel {
  double sigma_a = 0.02;    // accelerometer, m/s^2
  double sigma_w = 0.01;    // gyroscope, rad/s
  double sigma_m = 0.005;   // magnetometer, normalized units
  double sigma_cupt = 0.10; // loop-closure position, m

  /// Estimation requires strictly positive sigmas; simulation allows zero
  /// (noise-free runs), hence the flag.
  void validate(bool strictly_positive) const;
};

inline constexpr double kDefaultGravity = 9.81;

} // namespace imucal
