#include "imucal/sensor_models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace imucal {

double ImuDataset::nominal_dt() const {
  if (samples.size() < 2)
    throw InputError("dataset needs at least 2 samples to define a rate");
  std::vector<double> d(samples.size() - 1);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i)
    d[i] = samples[i + 1].t - samples[i].t;
  auto mid = d.begin() + static_cast<long>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

void ImuDataset::validate(double jitter_tol) const {
  const double dt = nominal_dt();
  if (dt <= 0.0) throw InputError("non-increasing timestamps in dataset");
  const double max_step = (1.0 + jitter_tol) * dt + 1e-12;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double step = samples[i + 1].t - samples[i].t;
    if (step <= 0.0)
      throw InputError("timestamps must be strictly increasing (sample " +
                       std::to_string(i + 1) + ")");
    if (step > max_step)
      throw InputError("timestamp gap of " + std::to_string(step) +
                       " s at sample " + std::to_string(i + 1) +
                       " exceeds jitter tolerance");
  }
}

std::size_t ImuDataset::index_at_or_before(double t_query) const {
  if (empty()) throw InputError("empty dataset");
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t_query,
      [](double t, const ImuSample& s) { return t < s.t; });
  if (it == samples.begin()) return 0;
  return static_cast<std::size_t>(it - samples.begin()) - 1;
}

void NoiseModel::validate(bool strictly_positive) const {
  const double lo = strictly_positive ? 0.0 : -1e-300;
  auto bad = [lo](double s) { return !(s > lo) || !std::isfinite(s); };
  if (bad(sigma_a) || bad(sigma_w) || bad(sigma_m) || bad(sigma_cupt))
    throw InputError(strictly_positive
                         ? "noise sigmas must be strictly positive"
                         : "noise sigmas must be non-negative");
}

Mat3 CalibrationParameters::lower_triangular(const Vec3& l) {
  Mat3 n = Mat3::Identity();
  n(1, 0) = l(0);
  n(2, 0) = l(1);
  n(2, 1) = l(2);
  return n;
}

Mat3 CalibrationParameters::R_w() const {
  const double angle = r_w.norm();
  if (angle < 1e-12) {
    Mat3 k;
    k << 0, -r_w.z(), r_w.y(), r_w.z(), 0, -r_w.x(), -r_w.y(), r_w.x(), 0;
    return Mat3::Identity() + k; // first order is exact enough below 1e-12
  }
  const Vec3 axis = r_w / angle;
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

bool CalibrationParameters::valid(double det_eps) const {
  if (!(gain_a.minCoeff() > 0.0) || !(gain_w.minCoeff() > 0.0)) return false;
  if (std::abs(D_m.determinant()) < det_eps) return false;
  return pack(*this).allFinite();
}

ParamVector pack(const CalibrationParameters& p) {
  ParamVector v;
  v.segment<3>(0) = p.b_a;
  v.segment<3>(3) = p.gain_a;
  v.segment<3>(6) = p.lower_a;
  v.segment<3>(9) = p.b_w;
  v.segment<3>(12) = p.gain_w;
  v.segment<3>(15) = p.lower_w;
  v.segment<3>(18) = p.r_w;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v(21 + 3 * r + c) = p.G_w(r, c);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v(30 + 3 * r + c) = p.D_m(r, c);
  v.segment<3>(39) = p.o_m;
  return v;
}

CalibrationParameters unpack(const ParamVector& v) {
  CalibrationParameters p;
  p.b_a = v.segment<3>(0);
  p.gain_a = v.segment<3>(3);
  p.lower_a = v.segment<3>(6);
  p.b_w = v.segment<3>(9);
  p.gain_w = v.segment<3>(12);
  p.lower_w = v.segment<3>(15);
  p.r_w = v.segment<3>(18);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.G_w(r, c) = v(21 + 3 * r + c);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.D_m(r, c) = v(30 + 3 * r + c);
  p.o_m = v.segment<3>(39);
  return p;
}

Vec3 apply_accel(const CalibrationParameters& p, const Vec3& a_true) {
  return p.accel_matrix() * a_true + p.b_a;
}

Vec3 apply_gyro(const CalibrationParameters& p, const Vec3& w_true,
                const Vec3& a_true) {
  return p.gyro_matrix() * w_true + p.b_w + p.G_w * a_true;
}

Vec3 apply_mag(const CalibrationParameters& p, const Vec3& m_true) {
  return p.D_m * m_true + p.o_m;
}

Vec3 correct_accel(const CalibrationParameters& p, const Vec3& y_a) {
  // S_a * N_a is lower triangular with positive diagonal: solve directly.
  return p.accel_matrix()
      .triangularView<Eigen::Lower>()
      .solve(Vec3(y_a - p.b_a));
}

Vec3 correct_gyro(const CalibrationParameters& p, const Vec3& y_w,
                  const Vec3& a_corrected) {
  const Vec3 rhs = y_w - p.b_w - p.G_w * a_corrected;
  return p.gyro_matrix().partialPivLu().solve(rhs);
}

Vec3 correct_mag(const CalibrationParameters& p, const Vec3& y_m) {
  Eigen::PartialPivLU<Mat3> lu(p.D_m);
  // PartialPivLU has no rank check; guard the pathological case explicitly.
  if (std::abs(p.D_m.determinant()) < 1e-9)
    throw NumericalError("soft-iron matrix is numerically singular");
  return lu.solve(Vec3(y_m - p.o_m));
}

} // namespace imucal
