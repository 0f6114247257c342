#include "imucal/segmentation.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "imucal/strapdown.hpp"

namespace imucal {

namespace {

std::vector<double> prefix_sum(const std::vector<double>& v) {
  std::vector<double> p(v.size() + 1, 0.0);
  for (size_t i = 0; i < v.size(); ++i) p[i + 1] = p[i] + v[i];
  return p;
}

double window_mean(const std::vector<double>& prefix, size_t i, size_t n) {
  return (prefix[i + n] - prefix[i]) / static_cast<double>(n);
}

// Centered moving average of |y_m| used by the field detector so single-sample
// noise does not trip the magnitude band.
std::vector<double> smoothed_mag_norm(const ImuDataset& dataset, size_t half) {
  const size_t n = dataset.size();
  std::vector<double> norm(n);
  for (size_t i = 0; i < n; ++i) norm[i] = dataset[i].mag.norm();
  const auto p = prefix_sum(norm);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t lo = i >= half ? i - half : 0;
    const size_t hi = std::min(n - 1, i + half);
    out[i] = (p[hi + 1] - p[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

} // namespace

std::vector<StaticInterval> detect_static(const ImuDataset& dataset,
                                          const SegmentationConfig& cfg) {
  const size_t n = dataset.size();
  if (n < 2) return {};
  const double dt = dataset.nominal_dt();
  const size_t w = std::max<size_t>(2, static_cast<size_t>(std::lround(cfg.static_window / dt)));
  if (n < w) return {};

  std::vector<double> gyro_norm(n), accel_norm(n), accel_norm_sq(n);
  for (size_t i = 0; i < n; ++i) {
    gyro_norm[i] = dataset[i].gyro.norm();
    accel_norm[i] = dataset[i].accel.norm();
    accel_norm_sq[i] = accel_norm[i] * accel_norm[i];
  }
  const auto pg = prefix_sum(gyro_norm);
  const auto pa = prefix_sum(accel_norm);
  const auto pa2 = prefix_sum(accel_norm_sq);

  // A sample counts as static only when every window covering it passes.
  // Requiring all covering windows keeps interval edges away from gentle
  // motion onsets that a single straddling window would average below the
  // thresholds.
  const size_t n_win = n - w + 1;
  std::vector<double> fail(n_win, 0.0);
  for (size_t i = 0; i < n_win; ++i) {
    const double mean_gyro = window_mean(pg, i, w);
    const double mean_a = window_mean(pa, i, w);
    const double var_a = std::max(0.0, window_mean(pa2, i, w) - mean_a * mean_a);
    const bool pass = mean_gyro < cfg.thr_gyro && std::sqrt(var_a) < cfg.thr_accel;
    if (!pass) fail[i] = 1.0;
  }
  const auto pf = prefix_sum(fail);
  std::vector<char> is_static(n, 0);
  for (size_t k = 0; k < n; ++k) {
    const size_t lo = k + 1 >= w ? k + 1 - w : 0;
    const size_t hi = std::min(k, n_win - 1);
    if (pf[hi + 1] - pf[lo] == 0.0) is_static[k] = 1;
  }

  std::vector<StaticInterval> out;
  size_t i = 0;
  while (i < n) {
    if (!is_static[i]) { ++i; continue; }
    size_t j = i;
    while (j + 1 < n && is_static[j + 1]) ++j;
    const double t0 = dataset[i].t;
    const double t1 = dataset[j].t;
    if (t1 - t0 >= cfg.min_static_duration) out.push_back({t0, t1});
    i = j + 1;
  }
  return out;
}

std::vector<FieldSegment> segment_field(const ImuDataset& dataset,
                                        const SegmentationConfig& cfg) {
  const size_t n = dataset.size();
  if (n < 2) return {};
  const double dt = dataset.nominal_dt();
  const size_t half = std::max<size_t>(1, static_cast<size_t>(std::lround(0.05 / dt)));
  const auto mag = smoothed_mag_norm(dataset, half);

  std::vector<double> sorted = mag;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double band = cfg.field_tolerance * sorted[n / 2];

  // Both tests below run only while the gyro is quiet. Before any calibration
  // the raw field norm and direction swing with attitude (the uncorrected
  // hard iron adds a fixed sensor-frame offset to a rotating vector), so
  // during rotation neither signal says anything about the field itself.
  std::vector<char> quiet(n, 1);
  for (size_t i = 0; i < n; ++i) {
    if (dataset[i].gyro.norm() > cfg.field_quiet_gyro) quiet[i] = 0;
  }

  // Short-horizon direction consistency: rotate the unit field at the end of
  // the horizon back by the raw-gyro increment and compare with the unit
  // field at the start.
  const size_t hz = std::max<size_t>(1, static_cast<size_t>(std::lround(cfg.field_consistency_horizon / dt)));
  const double dir_floor = cfg.field_consistency_factor * 0.08;

  std::vector<char> cut(n, 0);
  for (size_t i = 0; i + hz < n; ++i) {
    bool all_quiet = true;
    for (size_t k = i; k <= i + hz; ++k) {
      if (!quiet[k]) { all_quiet = false; break; }
    }
    if (!all_quiet) continue;
    UnitQuaternion dq = UnitQuaternion::identity();
    for (size_t k = i; k < i + hz; ++k) {
      const double h = dataset[k + 1].t - dataset[k].t;
      dq = dq * quat_exp(0.5 * h * (dataset[k].gyro + dataset[k + 1].gyro));
    }
    const Vec3 m0 = dataset[i].mag.normalized();
    const Vec3 m1 = dataset[i + hz].mag.normalized();
    if ((rotate(dq, m1) - m0).norm() > dir_floor) cut[i + hz] = 1;
  }

  // Magnitude drift against the segment's reference level, tested at quiet
  // samples. Sustained departure (not a single sample) declares a boundary,
  // which also catches slow ramps once the cumulative deviation leaves the
  // band. While the gyro is active the test pauses and the segment continues;
  // a field change during motion surfaces at the first quiet stretch after.
  const size_t sustain = std::max<size_t>(2, half);
  std::vector<FieldSegment> out;
  auto emit = [&](size_t first, size_t last) {
    const double t0 = dataset[first].t;
    const double t1 = dataset[last].t;
    const bool usable = t1 - t0 >= cfg.min_segment_duration;
    out.push_back({t0, t1, usable});
  };

  size_t start = 0;
  bool have_ref = quiet[0] != 0;
  double ref = mag[0];
  size_t out_of_band = 0;
  for (size_t i = 1; i < n; ++i) {
    bool boundary = false;
    if (cut[i]) {
      boundary = true;
    } else if (quiet[i]) {
      if (!have_ref) {
        have_ref = true;
        ref = mag[i];
      } else if (std::abs(mag[i] - ref) > band) {
        if (++out_of_band >= sustain) boundary = true;
      } else {
        out_of_band = 0;
      }
    }
    if (!boundary) continue;
    emit(start, i - 1);
    start = i;
    have_ref = quiet[i] != 0;
    ref = mag[i];
    out_of_band = 0;
  }
  emit(start, n - 1);
  return out;
}

namespace {

// Coarse uncalibrated dead reckoning between static anchors. Velocity is
// forced to zero at every static-interval center and the in-between velocity
// is linearly detrended, which keeps position drift bounded enough to decide
// whether the sensor came back near its starting point.
std::vector<Vec3> coarse_positions(const ImuDataset& dataset,
                                   const std::vector<StaticInterval>& statics,
                                   double g_local) {
  const size_t n = dataset.size();
  std::vector<double> t(n);
  std::vector<Vec3> accel(n), gyro(n);
  for (size_t i = 0; i < n; ++i) {
    t[i] = dataset[i].t;
    accel[i] = dataset[i].accel;
    gyro[i] = dataset[i].gyro;
  }
  PathIntegrator path(t, accel, gyro);

  // Level the first static interval: its mean specific force points opposite
  // local gravity.
  Vec3 mean_a = Vec3::Zero();
  size_t count = 0;
  for (size_t i = 0; i < n; ++i) {
    if (t[i] >= statics.front().t_start && t[i] <= statics.front().t_end) {
      mean_a += accel[i];
      ++count;
    }
  }
  mean_a /= static_cast<double>(std::max<size_t>(1, count));
  Eigen::Quaterniond q0 =
      Eigen::Quaterniond::FromTwoVectors(mean_a, Vec3(0, 0, 1));
  UnitQuaternion q_w0(q0.w(), q0.x(), q0.y(), q0.z());

  const Vec3 g_w(0, 0, -g_local);
  std::vector<Vec3> v(n, Vec3::Zero()), p(n, Vec3::Zero());
  std::vector<Vec3> f_w(n);
  for (size_t i = 0; i < n; ++i) {
    const UnitQuaternion q = q_w0 * path.rotation(0, i);
    f_w[i] = rotate(q, accel[i]) + g_w;
  }
  for (size_t i = 1; i < n; ++i) {
    v[i] = v[i - 1] + 0.5 * (t[i] - t[i - 1]) * (f_w[i - 1] + f_w[i]);
  }

  std::vector<size_t> anchors;
  for (const auto& s : statics) {
    anchors.push_back(dataset.index_at_or_before(0.5 * (s.t_start + s.t_end)));
  }
  std::vector<Vec3> v_corr = v;
  for (size_t a = 0; a + 1 < anchors.size(); ++a) {
    const size_t i0 = anchors[a];
    const size_t i1 = anchors[a + 1];
    const Vec3 bias0 = v[i0];
    const Vec3 bias1 = v[i1];
    for (size_t i = i0; i <= i1; ++i) {
      const double s = (t[i] - t[i0]) / std::max(1e-12, t[i1] - t[i0]);
      v_corr[i] = v[i] - (bias0 + s * (bias1 - bias0));
    }
  }
  for (size_t i = 1; i < n; ++i) {
    p[i] = p[i - 1] + 0.5 * (t[i] - t[i - 1]) * (v_corr[i - 1] + v_corr[i]);
  }
  return p;
}

} // namespace

std::vector<LoopClosure> find_loop_closures(
    const ImuDataset& dataset, const std::vector<StaticInterval>& statics,
    const LoopClosureConfig& cfg, double g_local) {
  if (cfg.mode == LoopClosureMode::Off) return {};
  if (cfg.mode == LoopClosureMode::Explicit) {
    std::vector<LoopClosure> out;
    for (LoopClosure lc : cfg.annotations) {
      if (dataset.empty() || lc.t_ref < dataset[0].t - 1e-9 ||
          lc.t_match > dataset[dataset.size() - 1].t + 1e-9 ||
          lc.t_match <= lc.t_ref) {
        throw InputError("loop closure annotation outside dataset or misordered");
      }
      if (lc.sigma <= 0.0) lc.sigma = cfg.sigma;
      out.push_back(lc);
    }
    return out;
  }

  if (statics.size() < 2 || dataset.size() < 2) return {};
  const auto p = coarse_positions(dataset, statics, g_local);

  std::vector<size_t> anchors;
  for (const auto& s : statics) {
    anchors.push_back(dataset.index_at_or_before(0.5 * (s.t_start + s.t_end)));
  }
  std::vector<LoopClosure> out;
  for (size_t a = 1; a < anchors.size(); ++a) {
    if ((p[anchors[a]] - p[anchors[0]]).norm() <= cfg.radius) {
      out.push_back({dataset[anchors[0]].t, dataset[anchors[a]].t, cfg.sigma});
    }
  }
  return out;
}

} // namespace imucal
