#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "imucal/core.hpp"

namespace imucal {

/// Hamilton-convention unit quaternion. Every public operation returns a
/// renormalized result so the unit-norm invariant survives long products.
struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  UnitQuaternion() = default;
  UnitQuaternion(double w_, double x_, double y_, double z_);

  static UnitQuaternion identity() { return {}; }

  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }
  UnitQuaternion operator*(const UnitQuaternion& r) const;

  double norm() const;
  Mat3 to_matrix() const;
  Vec3 to_rotation_vector() const;

  /// Rotation angle in [0, pi].
  double angle() const;

 private:
  void normalize();
};

/// Exponential map: rotation vector (axis * angle, rad) to quaternion.
UnitQuaternion quat_exp(const Vec3& phi);

/// Quaternion sandwich product q * v * q^c.
Vec3 rotate(const UnitQuaternion& q, const Vec3& v);

/// Relative rotation over [t_start, t_end]; dq maps vectors expressed in
/// the sensor frame at t_end into the sensor frame at t_start.
struct RotationIncrement {
  double t_start = 0.0;
  double t_end = 0.0;
  UnitQuaternion dq;
};

/// Velocity and position increments over an interval, both expressed in
/// the sensor frame at the interval end.
struct DeltaKinematics {
  RotationIncrement rotation;
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
};

struct TimedVec3 {
  double t = 0.0;
  Vec3 v = Vec3::Zero();
};

/// Integrates the quaternion kinematics over [t0, t1] with one exponential
/// step per sample interval (midpoint-averaged rate, renormalized). The
/// rate sequence must cover the interval; endpoints falling between samples
/// use linearly interpolated rates. Gaps beyond 10% of the nominal step are
/// rejected.
RotationIncrement integrate_orientation(std::span<const TimedVec3> rates,
                                        double t0, double t1);

/// Rotated trapezoidal integral of specific force over [t0, t1]
/// (and its time integral for delta_position).
Vec3 delta_velocity(std::span<const TimedVec3> accels,
                    std::span<const TimedVec3> rates, double t0, double t1);
Vec3 delta_position(std::span<const TimedVec3> accels,
                    std::span<const TimedVec3> rates, double t0, double t1);

/// All three increments in a single pass.
DeltaKinematics integrate_kinematics(std::span<const TimedVec3> accels,
                                     std::span<const TimedVec3> rates,
                                     double t0, double t1);

/// Cumulative strapdown integrals over an index-aligned signal stream.
/// Interval results between any two sample indices come out in O(1), and
/// match the direct integrals exactly (same trapezoidal sums, reordered).
class PathIntegrator {
 public:
  PathIntegrator() = default;
  PathIntegrator(std::vector<double> t, std::vector<Vec3> accel,
                 std::vector<Vec3> gyro);

  std::size_t size() const { return t_.size(); }
  double time(std::size_t i) const { return t_[i]; }
  const Vec3& accel(std::size_t i) const { return accel_[i]; }

  /// dq over [i0, i1] (end frame into start frame).
  UnitQuaternion rotation(std::size_t i0, std::size_t i1) const;
  /// dv/dp over [i0, i1], expressed in the frame at i1.
  Vec3 dv(std::size_t i0, std::size_t i1) const;
  Vec3 dp(std::size_t i0, std::size_t i1) const;
  DeltaKinematics kinematics(std::size_t i0, std::size_t i1) const;

 private:
  std::vector<double> t_;
  std::vector<Vec3> accel_;
  std::vector<UnitQuaternion> q0_; // dq from index 0 to k
  std::vector<Vec3> dv0_;          // prefix of the rotated force integral
  std::vector<Vec3> dp0_;          // prefix of its time integral
};

/// First-order covariance of the interval integrals under white sensor
/// noise (per-sample standard deviations). theta is the attitude error of
/// dq (right perturbation, end frame); vv/pp are the dv/dp errors
/// accumulated in the start frame.
struct IntegralNoise {
  Mat3 theta = Mat3::Zero();
  Mat3 vv = Mat3::Zero();
  Mat3 pp = Mat3::Zero();
  Mat3 theta_v = Mat3::Zero(); // cov(theta, dv)
  Mat3 theta_p = Mat3::Zero(); // cov(theta, dp)
  Mat3 vp = Mat3::Zero();      // cov(dv, dp)
};

IntegralNoise propagate_integral_noise(const PathIntegrator& path,
                                       std::size_t i0, std::size_t i1,
                                       double sigma_a, double sigma_w);

} // namespace imucal
