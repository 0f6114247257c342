#include "imucal/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace imucal {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

double fd_step(double x, double rel) { return rel * std::max(std::abs(x), 1.0); }

} // namespace

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::GravityMagnitude: return "gravity_magnitude";
    case ConstraintKind::ZeroRate: return "zero_rate";
    case ConstraintKind::MagRelative: return "mag_relative";
    case ConstraintKind::Levelling: return "levelling";
    case ConstraintKind::Zupt: return "zupt";
    case ConstraintKind::Cupt: return "cupt";
  }
  return "unknown";
}

size_t ConstraintSet::count(ConstraintKind kind) const {
  size_t n = 0;
  for (const auto& c : constraints) {
    if (c.kind == kind) ++n;
  }
  return n;
}

CorrectedPath::CorrectedPath(const ImuDataset& dataset,
                             const CalibrationParameters& p)
    : path_([&] {
        const size_t n = dataset.size();
        accel_.resize(n);
        gyro_.resize(n);
        mag_.resize(n);
        accel_prefix_.assign(n + 1, Vec3::Zero());
        Eigen::PartialPivLU<Mat3> lu(p.D_m);
        if (std::abs(p.D_m.determinant()) < 1e-9) {
          throw NumericalError("soft-iron matrix is numerically singular");
        }
        std::vector<double> t(n);
        for (size_t i = 0; i < n; ++i) {
          const ImuSample& s = dataset[i];
          t[i] = s.t;
          accel_[i] = correct_accel(p, s.accel);
          gyro_[i] = correct_gyro(p, s.gyro, accel_[i]);
          mag_[i] = lu.solve(s.mag - p.o_m);
          accel_prefix_[i + 1] = accel_prefix_[i] + accel_[i];
        }
        return PathIntegrator(t, accel_, gyro_);
      }()) {}

Vec3 CorrectedPath::mean_accel(size_t begin, size_t end) const {
  return (accel_prefix_[end + 1] - accel_prefix_[begin]) /
         static_cast<double>(end - begin + 1);
}

double residual_gravity(const CalibrationParameters& p, const Vec3& y_a,
                        double g_local) {
  const Vec3 a = correct_accel(p, y_a);
  return a.squaredNorm() - g_local * g_local;
}

Vec3 residual_zero_rate(const CalibrationParameters& p, const Vec3& y_w,
                        const Vec3& y_a) {
  return correct_gyro(p, y_w, correct_accel(p, y_a));
}

Vec3 residual_mag_relative(const CalibrationParameters& p, const Vec3& y_m_i,
                           const Vec3& y_m_j, const UnitQuaternion& dq) {
  const Vec3 mi = correct_mag(p, y_m_i).normalized();
  const Vec3 mj = correct_mag(p, y_m_j).normalized();
  return rotate(dq, mj) - mi;
}

Vec3 residual_levelling(const CalibrationParameters& p, const Vec3& y_a_i,
                        const Vec3& y_a_j, const UnitQuaternion& dq) {
  const Vec3 ai = correct_accel(p, y_a_i).normalized();
  const Vec3 aj = correct_accel(p, y_a_j).normalized();
  return rotate(dq, aj) - ai;
}

Vec3 residual_zupt(const DeltaKinematics& kin, const Vec3& g_s) {
  const double dt = kin.rotation.t_end - kin.rotation.t_start;
  return rotate(kin.rotation.dq.conjugate(), g_s * dt) + kin.dv;
}

Vec3 residual_cupt(const DeltaKinematics& kin, const Vec3& g_s) {
  const double dt = kin.rotation.t_end - kin.rotation.t_start;
  return rotate(kin.rotation.dq.conjugate(), 0.5 * dt * dt * g_s) + kin.dp;
}

namespace {

size_t first_index_at_or_after(const ImuDataset& ds, double t) {
  size_t i = ds.index_at_or_before(t);
  while (i + 1 < ds.size() && ds[i].t < t - 1e-9) ++i;
  return i;
}

} // namespace

ConstraintSet build_constraints(const ImuDataset& dataset,
                                const std::vector<StaticInterval>& statics,
                                const std::vector<FieldSegment>& segments,
                                const std::vector<LoopClosure>& loops,
                                const ConstraintConfig& cfg) {
  if (dataset.size() < 2) throw InputError("dataset too small for constraints");
  ConstraintSet set;
  set.statics = statics;
  set.segments = segments;
  set.has_statics = !statics.empty();
  const double dt = dataset.nominal_dt();

  // Sample-index ranges of the static intervals and the subsampled epochs.
  struct StaticRange { size_t begin, end; };
  std::vector<StaticRange> ranges;
  std::vector<size_t> epochs;          // global, time ordered
  std::vector<size_t> epoch_interval;  // owning interval per epoch
  const size_t sub_step =
      std::max<size_t>(1, static_cast<size_t>(std::lround(1.0 / (cfg.static_subsample_hz * dt))));
  for (size_t s = 0; s < statics.size(); ++s) {
    const size_t b = first_index_at_or_after(dataset, statics[s].t_start);
    const size_t e = dataset.index_at_or_before(statics[s].t_end);
    if (e <= b) continue;
    ranges.push_back({b, e});
    for (size_t k = b; k <= e; k += sub_step) {
      epochs.push_back(k);
      epoch_interval.push_back(ranges.size() - 1);
    }
  }

  for (size_t n = 0; n < epochs.size(); ++n) {
    const size_t k = epochs[n];
    Constraint g;
    g.kind = ConstraintKind::GravityMagnitude;
    g.i = g.j = k;
    g.t_start = g.t_end = dataset[k].t;
    g.dim = 1;
    set.constraints.push_back(g);

    Constraint z = g;
    z.kind = ConstraintKind::ZeroRate;
    z.dim = 3;
    set.constraints.push_back(z);

    if (n + 1 < epochs.size()) {
      Constraint l;
      l.kind = ConstraintKind::Levelling;
      l.i = k;
      l.j = epochs[n + 1];
      l.t_start = dataset[l.i].t;
      l.t_end = dataset[l.j].t;
      l.dim = 3;
      set.constraints.push_back(l);
    }
  }

  for (size_t s = 0; s + 1 < ranges.size(); ++s) {
    Constraint c;
    c.kind = ConstraintKind::Zupt;
    c.i = ranges[s].end;
    c.j = ranges[s + 1].begin;
    if (c.j <= c.i) continue;
    c.anchor_begin = ranges[s].begin;
    c.anchor_end = ranges[s].end;
    c.t_start = dataset[c.i].t;
    c.t_end = dataset[c.j].t;
    c.dim = 3;
    set.constraints.push_back(c);
  }

  for (const LoopClosure& lc : loops) {
    Constraint c;
    c.kind = ConstraintKind::Cupt;
    c.i = dataset.index_at_or_before(lc.t_ref);
    c.j = dataset.index_at_or_before(lc.t_match);
    if (c.j <= c.i) continue;
    if (ranges.empty()) continue; // no static anchor, no usable gravity direction
    size_t anchor = 0;
    for (size_t s = 0; s < ranges.size(); ++s) {
      if (dataset[ranges[s].begin].t - 1e-9 <= lc.t_ref &&
          lc.t_ref <= dataset[ranges[s].end].t + 1e-9) {
        anchor = s;
        break;
      }
    }
    c.anchor_begin = ranges[anchor].begin;
    c.anchor_end = ranges[anchor].end;
    c.t_start = dataset[c.i].t;
    c.t_end = dataset[c.j].t;
    c.dim = 3;
    c.extra_sigma = lc.sigma;
    set.constraints.push_back(c);
  }

  auto add_mag_pairs = [&](double horizon, double stride, bool fast) {
    const size_t span = std::max<size_t>(1, static_cast<size_t>(std::lround(horizon / dt)));
    const size_t step = std::max<size_t>(1, static_cast<size_t>(std::lround(stride / dt)));
    for (size_t seg = 0; seg < segments.size(); ++seg) {
      if (!segments[seg].assumed_homogeneous) continue;
      const size_t b = first_index_at_or_after(dataset, segments[seg].t_start);
      const size_t e = dataset.index_at_or_before(segments[seg].t_end);
      if (e <= b) continue;
      for (size_t k = b; k + span <= e; k += step) {
        Constraint c;
        c.kind = ConstraintKind::MagRelative;
        c.i = k;
        c.j = k + span;
        c.t_start = dataset[c.i].t;
        c.t_end = dataset[c.j].t;
        c.dim = 3;
        c.fast = fast;
        c.segment = seg;
        set.constraints.push_back(c);
      }
    }
  };
  add_mag_pairs(cfg.mag_fast_dt, cfg.mag_fast_stride, true);
  add_mag_pairs(cfg.mag_slow_dt, cfg.mag_slow_stride, false);

  return set;
}

Eigen::VectorXd evaluate_constraint(const Constraint& c,
                                    const CorrectedPath& path, double g_local) {
  Eigen::VectorXd w;
  switch (c.kind) {
    case ConstraintKind::GravityMagnitude: {
      w.resize(1);
      w(0) = path.accel(c.i).squaredNorm() - g_local * g_local;
      return w;
    }
    case ConstraintKind::ZeroRate:
      return path.gyro(c.i);
    case ConstraintKind::MagRelative: {
      const UnitQuaternion dq = path.path().rotation(c.i, c.j);
      return rotate(dq, path.mag(c.j).normalized()) - path.mag(c.i).normalized();
    }
    case ConstraintKind::Levelling: {
      const UnitQuaternion dq = path.path().rotation(c.i, c.j);
      return rotate(dq, path.accel(c.j).normalized()) - path.accel(c.i).normalized();
    }
    case ConstraintKind::Zupt:
    case ConstraintKind::Cupt: {
      const DeltaKinematics kin = path.path().kinematics(c.i, c.j);
      const Vec3 g_s = -path.mean_accel(c.anchor_begin, c.anchor_end).normalized() * g_local;
      return c.kind == ConstraintKind::Zupt ? residual_zupt(kin, g_s)
                                            : residual_cupt(kin, g_s);
    }
  }
  throw NumericalError("unknown constraint kind");
}

Eigen::VectorXd evaluate_constraint_raw(
    const Constraint& c, const CalibrationParameters& p,
    const std::function<ImuSample(size_t)>& sample, double g_local) {
  auto corrected_accel_at = [&](size_t k) {
    return correct_accel(p, sample(k).accel);
  };
  auto corrected_nodes = [&](std::vector<TimedVec3>* acc, std::vector<TimedVec3>* gyr) {
    for (size_t k = c.i; k <= c.j; ++k) {
      const ImuSample s = sample(k);
      const Vec3 a = correct_accel(p, s.accel);
      if (acc != nullptr) acc->push_back({s.t, a});
      gyr->push_back({s.t, correct_gyro(p, s.gyro, a)});
    }
  };
  auto anchor_gravity = [&] {
    Vec3 mean = Vec3::Zero();
    for (size_t k = c.anchor_begin; k <= c.anchor_end; ++k) {
      mean += corrected_accel_at(k);
    }
    mean /= static_cast<double>(c.anchor_end - c.anchor_begin + 1);
    return Vec3(-mean.normalized() * g_local);
  };

  switch (c.kind) {
    case ConstraintKind::GravityMagnitude: {
      Eigen::VectorXd w(1);
      w(0) = residual_gravity(p, sample(c.i).accel, g_local);
      return w;
    }
    case ConstraintKind::ZeroRate: {
      const ImuSample s = sample(c.i);
      return residual_zero_rate(p, s.gyro, s.accel);
    }
    case ConstraintKind::MagRelative: {
      std::vector<TimedVec3> gyr;
      corrected_nodes(nullptr, &gyr);
      const RotationIncrement inc =
          integrate_orientation(gyr, gyr.front().t, gyr.back().t);
      return residual_mag_relative(p, sample(c.i).mag, sample(c.j).mag, inc.dq);
    }
    case ConstraintKind::Levelling: {
      std::vector<TimedVec3> gyr;
      corrected_nodes(nullptr, &gyr);
      const RotationIncrement inc =
          integrate_orientation(gyr, gyr.front().t, gyr.back().t);
      return residual_levelling(p, sample(c.i).accel, sample(c.j).accel, inc.dq);
    }
    case ConstraintKind::Zupt:
    case ConstraintKind::Cupt: {
      std::vector<TimedVec3> acc, gyr;
      corrected_nodes(&acc, &gyr);
      const DeltaKinematics kin =
          integrate_kinematics(acc, gyr, acc.front().t, acc.back().t);
      const Vec3 g_s = anchor_gravity();
      return c.kind == ConstraintKind::Zupt ? residual_zupt(kin, g_s)
                                            : residual_cupt(kin, g_s);
    }
  }
  throw NumericalError("unknown constraint kind");
}

std::vector<TouchedChannel> touched_channels(const Constraint& c) {
  std::vector<TouchedChannel> out;
  auto add = [&](size_t k, int lo, int hi) {
    for (int ch = lo; ch <= hi; ++ch) out.push_back({k, ch});
  };
  switch (c.kind) {
    case ConstraintKind::GravityMagnitude:
      add(c.i, 0, 2);
      break;
    case ConstraintKind::ZeroRate:
      add(c.i, 0, 5);
      break;
    case ConstraintKind::MagRelative:
      for (size_t k = c.i; k <= c.j; ++k) add(k, 0, (k == c.i || k == c.j) ? 8 : 5);
      break;
    case ConstraintKind::Levelling:
      for (size_t k = c.i; k <= c.j; ++k) add(k, 0, 5);
      break;
    case ConstraintKind::Zupt:
    case ConstraintKind::Cupt: {
      std::map<size_t, int> hi; // sample -> highest channel touched
      for (size_t k = c.anchor_begin; k <= c.anchor_end; ++k) hi[k] = 2;
      for (size_t k = c.i; k <= c.j; ++k) hi[k] = 5;
      for (const auto& [k, top] : hi) add(k, 0, top);
      break;
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd fd_obs_jacobian(const Constraint& c,
                                const CalibrationParameters& p,
                                const ImuDataset& dataset, double g_local,
                                double rel_step,
                                const std::vector<TouchedChannel>& touched) {
  Eigen::MatrixXd B(c.dim, static_cast<Eigen::Index>(touched.size()));
  for (size_t col = 0; col < touched.size(); ++col) {
    const auto [target, ch] = touched[col];
    double base = 0.0;
    {
      const ImuSample& s = dataset[target];
      base = ch < 3 ? s.accel(ch) : (ch < 6 ? s.gyro(ch - 3) : s.mag(ch - 6));
    }
    const double h = fd_step(base, rel_step);
    auto getter = [&](double delta) {
      return [&, delta](size_t k) {
        ImuSample s = dataset[k];
        if (k == target) {
          if (ch < 3) s.accel(ch) += delta;
          else if (ch < 6) s.gyro(ch - 3) += delta;
          else s.mag(ch - 6) += delta;
        }
        return s;
      };
    };
    const Eigen::VectorXd wp = evaluate_constraint_raw(c, p, getter(h), g_local);
    const Eigen::VectorXd wm = evaluate_constraint_raw(c, p, getter(-h), g_local);
    B.col(static_cast<Eigen::Index>(col)) = (wp - wm) / (2.0 * h);
  }
  return B;
}

} // namespace

ConstraintJacobians jacobian_constraint(const Constraint& c,
                                        const CalibrationParameters& p,
                                        const ImuDataset& dataset,
                                        double g_local, double rel_step) {
  ConstraintJacobians out;
  auto plain = [&](size_t k) { return dataset[k]; };
  out.w = evaluate_constraint_raw(c, p, plain, g_local);

  const ParamVector x0 = pack(p);
  out.A.resize(c.dim, kNumParams);
  for (int q = 0; q < kNumParams; ++q) {
    const double h = fd_step(x0(q), rel_step);
    ParamVector xp = x0, xm = x0;
    xp(q) += h;
    xm(q) -= h;
    const Eigen::VectorXd wp = evaluate_constraint_raw(c, unpack(xp), plain, g_local);
    const Eigen::VectorXd wm = evaluate_constraint_raw(c, unpack(xm), plain, g_local);
    out.A.col(q) = (wp - wm) / (2.0 * h);
  }

  out.B = fd_obs_jacobian(c, p, dataset, g_local, rel_step, touched_channels(c));
  return out;
}

namespace {

double pseudo_floor(const Constraint& c, double g_local) {
  const double dt = c.t_end - c.t_start;
  double nominal = 1.0;
  switch (c.kind) {
    case ConstraintKind::GravityMagnitude: nominal = g_local * g_local; break;
    case ConstraintKind::Zupt: nominal = std::max(1.0, g_local * dt); break;
    case ConstraintKind::Cupt: nominal = std::max(1.0, 0.5 * g_local * dt * dt); break;
    default: nominal = 1.0; break;
  }
  const double s = 1e-6 * nominal;
  return s * s;
}

Mat3 anchor_direction_cov(const Constraint& c, const CorrectedPath& path,
                          const NoiseModel& noise, double g_local) {
  const Vec3 mean = path.mean_accel(c.anchor_begin, c.anchor_end);
  const Vec3 n = mean.normalized();
  const double count = static_cast<double>(c.anchor_end - c.anchor_begin + 1);
  const double scale =
      g_local * g_local * noise.sigma_a * noise.sigma_a / (count * mean.squaredNorm());
  return scale * (Mat3::Identity() - n * n.transpose());
}

} // namespace

Eigen::MatrixXd compute_constraint_noise(const Constraint& c,
                                         const CalibrationParameters& p,
                                         const ImuDataset& dataset,
                                         const CorrectedPath& path,
                                         const NoiseModel& noise,
                                         const ConstraintConfig& cfg,
                                         double g_local) {
  Eigen::MatrixXd M;
  const size_t span = c.j - c.i;
  if (span <= cfg.long_span_threshold) {
    const auto touched = touched_channels(c);
    const Eigen::MatrixXd B = fd_obs_jacobian(c, p, dataset, g_local, 1e-6, touched);
    Eigen::VectorXd var(static_cast<Eigen::Index>(touched.size()));
    for (size_t col = 0; col < touched.size(); ++col) {
      const int ch = touched[col].channel;
      const double s = ch < 3 ? noise.sigma_a : (ch < 6 ? noise.sigma_w : noise.sigma_m);
      var(static_cast<Eigen::Index>(col)) = s * s;
    }
    M = B * var.asDiagonal() * B.transpose();
  } else {
    const auto& pi = path.path();
    const IntegralNoise P = propagate_integral_noise(pi, c.i, c.j, noise.sigma_a, noise.sigma_w);
    const UnitQuaternion dq = pi.rotation(c.i, c.j);
    const Mat3 R = dq.to_matrix();
    switch (c.kind) {
      case ConstraintKind::Zupt:
      case ConstraintKind::Cupt: {
        const DeltaKinematics kin = pi.kinematics(c.i, c.j);
        const Vec3 g_s = -path.mean_accel(c.anchor_begin, c.anchor_end).normalized() * g_local;
        const double dt = c.t_end - c.t_start;
        const Vec3 rho = c.kind == ConstraintKind::Zupt ? residual_zupt(kin, g_s)
                                                        : residual_cupt(kin, g_s);
        Eigen::Matrix<double, 3, 9> J = Eigen::Matrix<double, 3, 9>::Zero();
        J.block<3, 3>(0, 0) = skew(rho);
        if (c.kind == ConstraintKind::Zupt) {
          J.block<3, 3>(0, 3) = R.transpose();
        } else {
          J.block<3, 3>(0, 6) = R.transpose();
        }
        Eigen::Matrix<double, 9, 9> Pm;
        Pm.block<3, 3>(0, 0) = P.theta;
        Pm.block<3, 3>(3, 3) = P.vv;
        Pm.block<3, 3>(6, 6) = P.pp;
        Pm.block<3, 3>(0, 3) = P.theta_v;
        Pm.block<3, 3>(3, 0) = P.theta_v.transpose();
        Pm.block<3, 3>(0, 6) = P.theta_p;
        Pm.block<3, 3>(6, 0) = P.theta_p.transpose();
        Pm.block<3, 3>(3, 6) = P.vp;
        Pm.block<3, 3>(6, 3) = P.vp.transpose();
        const double gscale = c.kind == ConstraintKind::Zupt ? dt : 0.5 * dt * dt;
        const Mat3 Ag = R.transpose() * gscale;
        M = J * Pm * J.transpose() +
            Ag * anchor_direction_cov(c, path, noise, g_local) * Ag.transpose();
        break;
      }
      case ConstraintKind::Levelling:
      case ConstraintKind::MagRelative: {
        const bool mag = c.kind == ConstraintKind::MagRelative;
        const Vec3 vi = mag ? path.mag(c.i) : path.accel(c.i);
        const Vec3 vj = mag ? path.mag(c.j) : path.accel(c.j);
        const double s = mag ? noise.sigma_m : noise.sigma_a;
        const Mat3 Jt = -R * skew(vj.normalized());
        const Mat3 Pi = (Mat3::Identity() - vi.normalized() * vi.normalized().transpose()) /
                        vi.squaredNorm();
        const Mat3 Pj = (Mat3::Identity() - vj.normalized() * vj.normalized().transpose()) /
                        vj.squaredNorm();
        M = Jt * P.theta * Jt.transpose() + s * s * (Pi + R * Pj * R.transpose());
        break;
      }
      default:
        throw NumericalError("unexpected long-span constraint kind");
    }
  }

  const double floor_var =
      pseudo_floor(c, g_local) +
      (c.kind == ConstraintKind::Cupt ? c.extra_sigma * c.extra_sigma : 0.0);
  M += floor_var * Eigen::MatrixXd::Identity(c.dim, c.dim);
  if (c.kind == ConstraintKind::Levelling || c.kind == ConstraintKind::MagRelative) {
    // Unit-direction differences carry no first-order noise along the
    // reference direction, which would leave the covariance near-singular
    // there. Prop up that one axis to the transverse noise scale; the
    // transverse plane already carries the propagated noise, so flooring it
    // again would just deflate the whitened residuals.
    const bool mag = c.kind == ConstraintKind::MagRelative;
    const double s2 = mag ? noise.sigma_m * noise.sigma_m : noise.sigma_a * noise.sigma_a;
    const Vec3 vi = mag ? path.mag(c.i) : path.accel(c.i);
    const Vec3 vj = mag ? path.mag(c.j) : path.accel(c.j);
    const Vec3 ni = vi.normalized();
    M += (s2 / vi.squaredNorm() + s2 / vj.squaredNorm()) * (ni * ni.transpose());
  }
  return M;
}

} // namespace imucal
