#pragma once

#include <Eigen/Core>

#include "imucal/core.hpp"

namespace imucal {

/// Number of estimated calibration parameters.
inline constexpr int kNumParams = 42;

using ParamVector = Eigen::Matrix<double, kNumParams, 1>;

/// Full error model of the 9-DoF unit.
///
/// Accelerometer: y_a = S_a * N_a * a + b_a
/// Gyroscope:     y_w = S_w * N_w * R_w * w + b_w + G_w * a
/// Magnetometer:  y_m = D_m * m + o_m
///
/// S_* are diagonal gain matrices (stored as their diagonals), N_* are
/// lower triangular with unit diagonal (stored as the three strictly lower
/// entries), R_w is the gyro-to-accelerometer frame misalignment stored as
/// a small rotation vector, G_w the g-sensitivity matrix, D_m the soft-iron
/// matrix and o_m the hard-iron offset.
struct CalibrationParameters {
  Vec3 b_a = Vec3::Zero();
  Vec3 gain_a = Vec3::Ones();   // diagonal of S_a
  Vec3 lower_a = Vec3::Zero();  // N_a(1,0), N_a(2,0), N_a(2,1)
  Vec3 b_w = Vec3::Zero();
  Vec3 gain_w = Vec3::Ones();   // diagonal of S_w
  Vec3 lower_w = Vec3::Zero();  // N_w(1,0), N_w(2,0), N_w(2,1)
  Vec3 r_w = Vec3::Zero();      // rotation vector of R_w
  Mat3 G_w = Mat3::Zero();
  Mat3 D_m = Mat3::Identity();
  Vec3 o_m = Vec3::Zero();

  static CalibrationParameters identity() { return {}; }

  Mat3 S_a() const { return gain_a.asDiagonal(); }
  Mat3 S_w() const { return gain_w.asDiagonal(); }
  Mat3 N_a() const { return lower_triangular(lower_a); }
  Mat3 N_w() const { return lower_triangular(lower_w); }
  Mat3 R_w() const; // Rodrigues expansion of r_w

  /// Combined accelerometer matrix S_a * N_a and its inverse.
  Mat3 accel_matrix() const { return S_a() * N_a(); }
  /// Combined gyroscope matrix S_w * N_w * R_w.
  Mat3 gyro_matrix() const { return S_w() * N_w() * R_w(); }

  /// Structural validity: positive gains, invertible D_m.
  bool valid(double det_eps = 1e-9) const;

  static Mat3 lower_triangular(const Vec3& l);
};

/// Round-trip serialization into the fixed 42-entry layout:
/// [b_a, diag S_a, strict-lower N_a, b_w, diag S_w, strict-lower N_w,
///  r_w, G_w row-major, D_m row-major, o_m].
ParamVector pack(const CalibrationParameters& p);
CalibrationParameters unpack(const ParamVector& v);

/// Forward models: map true physical quantities to raw sensor outputs.
Vec3 apply_accel(const CalibrationParameters& p, const Vec3& a_true);
Vec3 apply_gyro(const CalibrationParameters& p, const Vec3& w_true,
                const Vec3& a_true);
Vec3 apply_mag(const CalibrationParameters& p, const Vec3& m_true);

/// Inverse models: recover physical quantities from raw sensor outputs.
/// correct_gyro consumes the already corrected specific force because the
/// g-sensitivity term is driven by the true acceleration.
Vec3 correct_accel(const CalibrationParameters& p, const Vec3& y_a);
Vec3 correct_gyro(const CalibrationParameters& p, const Vec3& y_w,
                  const Vec3& a_corrected);
Vec3 correct_mag(const CalibrationParameters& p, const Vec3& y_m);

} // namespace imucal
