#include "imucal/strapdown.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace imucal {

UnitQuaternion::UnitQuaternion(double w_, double x_, double y_, double z_)
    : w(w_), x(x_), y(y_), z(z_) {
  normalize();
}

void UnitQuaternion::normalize() {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < 1e-300) throw NumericalError("degenerate quaternion");
  w /= n;
  x /= n;
  y /= n;
  z /= n;
}

double UnitQuaternion::norm() const {
  return std::sqrt(w * w + x * x + y * y + z * z);
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  return {w * r.w - x * r.x - y * r.y - z * r.z,
          w * r.x + x * r.w + y * r.z - z * r.y,
          w * r.y - x * r.z + y * r.w + z * r.x,
          w * r.z + x * r.y - y * r.x + z * r.w};
}

Mat3 UnitQuaternion::to_matrix() const {
  Mat3 m;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, xz = x * z, yz = y * z;
  const double wx = w * x, wy = w * y, wz = w * z;
  m << 1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
       2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
       2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy);
  return m;
}

Vec3 UnitQuaternion::to_rotation_vector() const {
  const double vn = std::sqrt(x * x + y * y + z * z);
  const double ang = 2.0 * std::atan2(vn, std::abs(w));
  if (vn < 1e-14) return Vec3::Zero();
  const double sign = (w >= 0.0) ? 1.0 : -1.0;
  return Vec3(x, y, z) * (sign * ang / vn);
}

double UnitQuaternion::angle() const {
  return 2.0 * std::atan2(std::sqrt(x * x + y * y + z * z), std::abs(w));
}

UnitQuaternion quat_exp(const Vec3& phi) {
  const double a = phi.norm();
  double s;
  if (a < 1e-8) {
    s = 0.5 - a * a / 48.0; // sin(a/2)/a expanded for small angles
  } else {
    s = std::sin(0.5 * a) / a;
  }
  return {std::cos(0.5 * a), s * phi.x(), s * phi.y(), s * phi.z()};
}

Vec3 rotate(const UnitQuaternion& q, const Vec3& v) {
  // q * v * q^c expanded via the double cross product form.
  const Vec3 u(q.x, q.y, q.z);
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w * t + u.cross(t);
}

namespace {

// Integration nodes for [t0, t1]: the endpoints plus every sample time
// strictly inside. Values at off-grid endpoints are linearly interpolated.
struct NodeWalker {
  std::span<const TimedVec3> seq;
  std::size_t lo = 0; // index of the sample at or before the current node

  explicit NodeWalker(std::span<const TimedVec3> s) : seq(s) {}

  Vec3 value_at(double t) const {
    std::size_t i = lo;
    while (i + 1 < seq.size() && seq[i + 1].t <= t) ++i;
    if (seq[i].t == t || i + 1 == seq.size()) return seq[i].v;
    const double f = (t - seq[i].t) / (seq[i + 1].t - seq[i].t);
    return (1.0 - f) * seq[i].v + f * seq[i + 1].v;
  }
};

void check_coverage(std::span<const TimedVec3> seq, double t0, double t1) {
  constexpr double kEps = 1e-9;
  if (seq.size() < 2) throw InputError("integration needs at least 2 samples");
  if (!(t1 > t0)) throw InputError("integration interval is empty");
  if (seq.front().t > t0 + kEps || seq.back().t < t1 - kEps)
    throw InputError("signal does not cover the integration interval");
  std::vector<double> d(seq.size() - 1);
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    d[i] = seq[i + 1].t - seq[i].t;
    if (d[i] <= 0.0)
      throw InputError("timestamps must be strictly increasing");
  }
  auto mid = d.begin() + static_cast<long>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double max_step = 1.1 * *mid + 1e-12;
  for (double step : d)
    if (step > max_step)
      throw InputError("timestamp gap exceeds 10% jitter tolerance");
}

std::vector<double> build_nodes(std::span<const TimedVec3> seq, double t0,
                                double t1) {
  std::vector<double> nodes;
  nodes.push_back(t0);
  for (const auto& s : seq)
    if (s.t > t0 && s.t < t1) nodes.push_back(s.t);
  nodes.push_back(t1);
  return nodes;
}

} // namespace

RotationIncrement integrate_orientation(std::span<const TimedVec3> rates,
                                        double t0, double t1) {
  check_coverage(rates, t0, t1);
  const auto nodes = build_nodes(rates, t0, t1);
  NodeWalker walk(rates);
  UnitQuaternion dq;
  Vec3 w_prev = walk.value_at(nodes[0]);
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const Vec3 w_next = walk.value_at(nodes[k]);
    const double h = nodes[k] - nodes[k - 1];
    dq = dq * quat_exp(0.5 * (w_prev + w_next) * h);
    w_prev = w_next;
  }
  return {t0, t1, dq};
}

DeltaKinematics integrate_kinematics(std::span<const TimedVec3> accels,
                                     std::span<const TimedVec3> rates,
                                     double t0, double t1) {
  check_coverage(rates, t0, t1);
  check_coverage(accels, t0, t1);
  const auto nodes = build_nodes(rates, t0, t1);
  NodeWalker rate_walk(rates);
  NodeWalker accel_walk(accels);

  UnitQuaternion dq; // frame at current node -> frame at t0
  Vec3 dv = Vec3::Zero(), dp = Vec3::Zero();
  Vec3 w_prev = rate_walk.value_at(nodes[0]);
  Vec3 u_prev = rotate(dq, accel_walk.value_at(nodes[0]));
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double h = nodes[k] - nodes[k - 1];
    const Vec3 w_next = rate_walk.value_at(nodes[k]);
    dq = dq * quat_exp(0.5 * (w_prev + w_next) * h);
    const Vec3 u_next = rotate(dq, accel_walk.value_at(nodes[k]));
    const Vec3 dv_next = dv + 0.5 * (u_prev + u_next) * h;
    dp += 0.5 * (dv + dv_next) * h;
    dv = dv_next;
    w_prev = w_next;
    u_prev = u_next;
  }
  DeltaKinematics out;
  out.rotation = {t0, t1, dq};
  const UnitQuaternion to_end = dq.conjugate();
  out.dv = rotate(to_end, dv);
  out.dp = rotate(to_end, dp);
  return out;
}

Vec3 delta_velocity(std::span<const TimedVec3> accels,
                    std::span<const TimedVec3> rates, double t0, double t1) {
  return integrate_kinematics(accels, rates, t0, t1).dv;
}

Vec3 delta_position(std::span<const TimedVec3> accels,
                    std::span<const TimedVec3> rates, double t0, double t1) {
  return integrate_kinematics(accels, rates, t0, t1).dp;
}

PathIntegrator::PathIntegrator(std::vector<double> t, std::vector<Vec3> accel,
                               std::vector<Vec3> gyro)
    : t_(std::move(t)), accel_(std::move(accel)) {
  if (t_.size() != accel_.size() || t_.size() != gyro.size())
    throw InputError("path integrator inputs must be index-aligned");
  if (t_.size() < 2) throw InputError("path integrator needs >= 2 samples");
  const std::size_t n = t_.size();
  q0_.resize(n);
  dv0_.resize(n);
  dp0_.resize(n);
  q0_[0] = UnitQuaternion::identity();
  dv0_[0] = Vec3::Zero();
  dp0_[0] = Vec3::Zero();
  Vec3 u_prev = accel_[0];
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = t_[k + 1] - t_[k];
    if (h <= 0.0) throw InputError("timestamps must be strictly increasing");
    q0_[k + 1] = q0_[k] * quat_exp(0.5 * (gyro[k] + gyro[k + 1]) * h);
    const Vec3 u_next = rotate(q0_[k + 1], accel_[k + 1]);
    dv0_[k + 1] = dv0_[k] + 0.5 * (u_prev + u_next) * h;
    dp0_[k + 1] = dp0_[k] + 0.5 * (dv0_[k] + dv0_[k + 1]) * h;
    u_prev = u_next;
  }
}

UnitQuaternion PathIntegrator::rotation(std::size_t i0, std::size_t i1) const {
  return q0_[i0].conjugate() * q0_[i1];
}

Vec3 PathIntegrator::dv(std::size_t i0, std::size_t i1) const {
  return rotate(q0_[i1].conjugate(), dv0_[i1] - dv0_[i0]);
}

Vec3 PathIntegrator::dp(std::size_t i0, std::size_t i1) const {
  const Vec3 raw = dp0_[i1] - dp0_[i0] - dv0_[i0] * (t_[i1] - t_[i0]);
  return rotate(q0_[i1].conjugate(), raw);
}

DeltaKinematics PathIntegrator::kinematics(std::size_t i0,
                                           std::size_t i1) const {
  DeltaKinematics out;
  out.rotation = {t_[i0], t_[i1], rotation(i0, i1)};
  out.dv = dv(i0, i1);
  out.dp = dp(i0, i1);
  return out;
}

IntegralNoise propagate_integral_noise(const PathIntegrator& path,
                                       std::size_t i0, std::size_t i1,
                                       double sigma_a, double sigma_w) {
  // State (dtheta, dv, dp); dtheta as right perturbation in the running
  // body frame, dv/dp in the frame at i0. Euler transition per sample step.
  Eigen::Matrix<double, 9, 9> P = Eigen::Matrix<double, 9, 9>::Zero();
  const double qw = sigma_w * sigma_w;
  const double qa = sigma_a * sigma_a;
  UnitQuaternion q; // frame k -> frame i0
  for (std::size_t k = i0; k < i1; ++k) {
    const double h = path.time(k + 1) - path.time(k);
    const Mat3 R = q.to_matrix();
    const Vec3 f = path.accel(k);
    Mat3 fx;
    fx << 0, -f.z(), f.y(), f.z(), 0, -f.x(), -f.y(), f.x(), 0;
    const Mat3 RFx = R * fx;

    Eigen::Matrix<double, 9, 9> F = Eigen::Matrix<double, 9, 9>::Identity();
    F.block<3, 3>(0, 0) = path.rotation(k, k + 1).to_matrix().transpose();
    F.block<3, 3>(3, 0) = -RFx * h;
    F.block<3, 3>(6, 3) = Mat3::Identity() * h;
    F.block<3, 3>(6, 0) = -0.5 * RFx * h * h;

    Eigen::Matrix<double, 9, 6> G = Eigen::Matrix<double, 9, 6>::Zero();
    G.block<3, 3>(0, 0) = Mat3::Identity() * h;
    G.block<3, 3>(3, 3) = R * h;
    G.block<3, 3>(6, 3) = 0.5 * R * h * h;

    Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
    Q.block<3, 3>(0, 0) = Mat3::Identity() * qw;
    Q.block<3, 3>(3, 3) = Mat3::Identity() * qa;

    P = F * P * F.transpose() + G * Q * G.transpose();
    q = path.rotation(i0, k + 1);
  }
  IntegralNoise out;
  out.theta = P.block<3, 3>(0, 0);
  out.vv = P.block<3, 3>(3, 3);
  out.pp = P.block<3, 3>(6, 6);
  out.theta_v = P.block<3, 3>(0, 3);
  out.theta_p = P.block<3, 3>(0, 6);
  out.vp = P.block<3, 3>(3, 6);
  return out;
}

} // namespace imucal
