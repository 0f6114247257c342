#include "imucal/navigation.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "imucal/segmentation.hpp"

namespace imucal {

namespace {

UnitQuaternion level_attitude(const ImuDataset& dataset,
                              const CalibrationParameters& params) {
  SegmentationConfig cfg;
  const auto statics = detect_static(dataset, cfg);
  const double t0 = dataset.samples.front().t;
  if (statics.empty() || statics.front().t_start > t0 + cfg.static_window) {
    throw NumericalError(
        "cannot initialize attitude: the dataset does not begin with a "
        "static interval and no initial attitude was supplied");
  }
  const StaticInterval& lead = statics.front();
  Vec3 mean = Vec3::Zero();
  std::size_t count = 0;
  for (const ImuSample& s : dataset.samples) {
    if (s.t < lead.t_start) continue;
    if (s.t > lead.t_end) break;
    mean += correct_accel(params, s.accel);
    ++count;
  }
  mean /= static_cast<double>(count);
  const Eigen::Quaterniond q =
      Eigen::Quaterniond::FromTwoVectors(mean, Vec3::UnitZ());
  return {q.w(), q.x(), q.y(), q.z()};
}

void check_solution(const NavSolution& s, const char* name) {
  const std::size_t n = s.traj.t.size();
  if (s.traj.q.size() != n || s.traj.v.size() != n || s.traj.p.size() != n ||
      s.accel.size() != n || s.gyro.size() != n) {
    throw InputError(std::string("navigation solution '") + name +
                     "' has inconsistent array lengths");
  }
}

void check_aligned(const Trajectory& a, const Trajectory& b) {
  if (a.t.size() != b.t.size()) {
    throw InputError("trajectory timelines differ in length");
  }
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    if (std::abs(a.t[i] - b.t[i]) > 1e-6) {
      throw InputError("trajectory timelines are misaligned");
    }
  }
}

double pooled_rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]).squaredNorm();
  return a.empty() ? 0.0 : std::sqrt(ss / (3.0 * static_cast<double>(a.size())));
}

} // namespace

Trajectory mechanize(const ImuDataset& dataset,
                     const CalibrationParameters& params, double g_local,
                     const std::optional<UnitQuaternion>& initial_attitude) {
  dataset.validate();
  if (!params.valid()) throw InputError("calibration parameters are invalid");

  const std::size_t n = dataset.samples.size();
  std::vector<Vec3> f(n), w(n);
  for (std::size_t k = 0; k < n; ++k) {
    f[k] = correct_accel(params, dataset.samples[k].accel);
    w[k] = correct_gyro(params, dataset.samples[k].gyro, f[k]);
  }

  Trajectory traj;
  traj.t.resize(n);
  traj.q.resize(n);
  traj.v.assign(n, Vec3::Zero());
  traj.p.assign(n, Vec3::Zero());

  const Vec3 g_vec(0.0, 0.0, -g_local);
  UnitQuaternion q =
      initial_attitude ? *initial_attitude : level_attitude(dataset, params);
  traj.t[0] = dataset.samples[0].t;
  traj.q[0] = q;
  Vec3 a_prev = q.to_matrix() * f[0] + g_vec;
  for (std::size_t k = 1; k < n; ++k) {
    const double dt = dataset.samples[k].t - dataset.samples[k - 1].t;
    q = q * quat_exp(0.5 * dt * (w[k - 1] + w[k]));
    const Vec3 a = q.to_matrix() * f[k] + g_vec;
    traj.t[k] = dataset.samples[k].t;
    traj.q[k] = q;
    traj.v[k] = traj.v[k - 1] + 0.5 * dt * (a_prev + a);
    traj.p[k] = traj.p[k - 1] + 0.5 * dt * (traj.v[k - 1] + traj.v[k]);
    a_prev = a;
  }
  return traj;
}

double improvement_percent(double before, double after) {
  if (before == 0.0) return 0.0;
  return 100.0 * (before - after) / before;
}

MetricsColumn evaluate_against(const NavSolution& solution,
                               const NavSolution& reference, double g_local,
                               std::vector<double>* vel_curve,
                               std::vector<double>* pos_curve,
                               std::vector<double>* window_times) {
  check_solution(solution, "estimate");
  check_solution(reference, "reference");
  check_aligned(solution.traj, reference.traj);

  MetricsColumn col;
  col.accel = pooled_rmse(solution.accel, reference.accel);
  col.gyro_deg = pooled_rmse(solution.gyro, reference.gyro) * 180.0 / M_PI;

  const std::size_t n = solution.traj.t.size();
  if (n == 0) return col;

  const UnitQuaternion datum =
      solution.traj.q[0] * reference.traj.q[0].conjugate();
  double ss_angle = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const UnitQuaternion aligned_ref = datum * reference.traj.q[k];
    ss_angle += std::pow((aligned_ref.conjugate() * solution.traj.q[k]).angle(), 2);
  }
  col.orientation_deg =
      std::sqrt(ss_angle / static_cast<double>(n)) * 180.0 / M_PI;

  const double dt = (solution.traj.t.back() - solution.traj.t.front()) /
                    static_cast<double>(n > 1 ? n - 1 : 1);
  const auto stride = static_cast<std::size_t>(std::lround(1.0 / dt));
  const auto span = static_cast<std::size_t>(std::lround(10.0 / dt));
  if (stride == 0 || span == 0 || span >= n) return col;

  const Vec3 g_vec(0.0, 0.0, -g_local);
  auto window = [&](const Trajectory& tr, std::size_t i, std::size_t j,
                    Vec3* dv_body, Vec3* dp_body) {
    const double T = tr.t[j] - tr.t[i];
    const Mat3 Rt = tr.q[i].to_matrix();
    *dv_body = Rt.transpose() * (tr.v[j] - tr.v[i] - T * g_vec);
    *dp_body = Rt.transpose() * (tr.p[j] - tr.p[i] - 0.5 * T * T * g_vec);
  };

  double ss_v = 0.0, ss_p = 0.0, ss_i = 0.0;
  std::size_t wins = 0;
  for (std::size_t i = 0; i + span < n; i += stride) {
    const std::size_t j = i + span;
    Vec3 dv_e, dp_e, dv_r, dp_r;
    window(solution.traj, i, j, &dv_e, &dp_e);
    window(reference.traj, i, j, &dv_r, &dp_r);
    const double ev = (dv_e - dv_r).norm();
    const double ep = (dp_e - dp_r).norm();
    ss_v += ev * ev;
    ss_p += ep * ep;
    ss_i += std::pow(dv_e.norm() - dv_r.norm(), 2);
    ++wins;
    if (vel_curve) vel_curve->push_back(ev);
    if (pos_curve) pos_curve->push_back(ep);
    if (window_times) window_times->push_back(solution.traj.t[i]);
  }
  if (wins > 0) {
    col.velocity_10s = std::sqrt(ss_v / static_cast<double>(wins));
    col.position_10s = std::sqrt(ss_p / static_cast<double>(wins));
    col.integrated_accel = std::sqrt(ss_i / static_cast<double>(wins));
  }
  return col;
}

MetricsReport evaluate(const NavSolution& before, const NavSolution& after,
                       const NavSolution& reference, double g_local,
                       ErrorCurves* curves) {
  std::vector<double>*vb = nullptr, *pb = nullptr, *va = nullptr, *pa = nullptr,
                     *wt = nullptr;
  if (curves) {
    *curves = ErrorCurves{};
    vb = &curves->vel_before;
    pb = &curves->pos_before;
    va = &curves->vel_after;
    pa = &curves->pos_after;
    wt = &curves->t;
  }
  const MetricsColumn b =
      evaluate_against(before, reference, g_local, vb, pb, nullptr);
  const MetricsColumn a =
      evaluate_against(after, reference, g_local, va, pa, wt);

  MetricsReport rep;
  auto fill = [](double bv, double av) {
    return MetricValue{bv, av, improvement_percent(bv, av)};
  };
  rep.accel = fill(b.accel, a.accel);
  rep.gyro_deg = fill(b.gyro_deg, a.gyro_deg);
  rep.orientation_deg = fill(b.orientation_deg, a.orientation_deg);
  rep.velocity_10s = fill(b.velocity_10s, a.velocity_10s);
  rep.position_10s = fill(b.position_10s, a.position_10s);
  rep.integrated_accel = fill(b.integrated_accel, a.integrated_accel);
  return rep;
}

} // namespace imucal
