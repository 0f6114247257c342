#include "imucal/simulator.hpp"

#include <cmath>
#include <random>

namespace imucal {

namespace {

constexpr double kTimeEps = 1e-9;

// Seventh-order smoothstep: value, first and second derivative all vanish at
// both ends, and so does the third derivative.
double smooth7(double u) {
  return (((-20.0 * u + 70.0) * u - 84.0) * u + 35.0) * u * u * u * u;
}
double dsmooth7(double u) {
  return (((-140.0 * u + 420.0) * u - 420.0) * u + 140.0) * u * u * u;
}
double ddsmooth7(double u) {
  return (((-840.0 * u + 2100.0) * u - 1680.0) * u + 420.0) * u * u;
}

// C3 on/off envelope over [0, T] with ramps of length r at both ends.
struct Envelope {
  double T = 1.0;
  double r = 0.5;
  void eval(double tau, double* e, double* de, double* dde) const {
    if (tau <= 0.0 || tau >= T) {
      *e = *de = *dde = 0.0;
    } else if (tau < r) {
      const double u = tau / r;
      *e = smooth7(u);
      *de = dsmooth7(u) / r;
      *dde = ddsmooth7(u) / (r * r);
    } else if (tau > T - r) {
      const double u = (T - tau) / r;
      *e = smooth7(u);
      *de = -dsmooth7(u) / r;
      *dde = ddsmooth7(u) / (r * r);
    } else {
      *e = 1.0;
      *de = 0.0;
      *dde = 0.0;
    }
  }
};

// Rotation about one fixed body axis: either a single smooth slew by `angle`
// or an enveloped sinusoidal oscillation. Rates from distinct bursts never
// overlap in time, so every integrator step stays single-axis.
struct RotationBurst {
  double t0 = 0.0, t1 = 1.0;
  Vec3 axis = Vec3::UnitZ();
  double angle = 0.0;
  bool oscillating = false;
  double amp = 0.0, freq = 1.0, ramp = 0.5;

  double rate_at(double t) const {
    if (t <= t0 || t >= t1) return 0.0;
    const double T = t1 - t0;
    const double tau = t - t0;
    if (!oscillating) return angle * dsmooth7(tau / T) / T;
    double e, de, dde;
    Envelope{T, ramp}.eval(tau, &e, &de, &dde);
    const double ph = 2.0 * M_PI * freq;
    return amp * (ph * std::cos(ph * tau) * e + std::sin(ph * tau) * de);
  }
};

// Translation along a fixed world vector (smooth move that persists) or an
// enveloped world-axis oscillation (zero net displacement).
struct TranslationPrimitive {
  double t0 = 0.0, t1 = 1.0;
  Vec3 delta = Vec3::Zero();
  bool oscillating = false;
  Vec3 osc_axis = Vec3::UnitZ();
  double amp = 0.0, freq = 1.0, ramp = 0.5;

  void accumulate(double t, Vec3* p, Vec3* v, Vec3* a) const {
    if (t <= t0) return;
    if (!oscillating) {
      if (t >= t1) {
        *p += delta;
        return;
      }
      const double T = t1 - t0;
      const double u = (t - t0) / T;
      *p += delta * smooth7(u);
      *v += delta * (dsmooth7(u) / T);
      *a += delta * (ddsmooth7(u) / (T * T));
      return;
    }
    if (t >= t1) return;
    const double tau = t - t0;
    double e, de, dde;
    Envelope{t1 - t0, ramp}.eval(tau, &e, &de, &dde);
    const double ph = 2.0 * M_PI * freq;
    const double s = std::sin(ph * tau);
    const double c = std::cos(ph * tau);
    *p += osc_axis * (amp * s * e);
    *v += osc_axis * (amp * (ph * c * e + s * de));
    *a += osc_axis * (amp * (-ph * ph * s * e + 2.0 * ph * c * de + s * dde));
  }
};

struct Script {
  std::vector<RotationBurst> bursts;
  std::vector<TranslationPrimitive> moves;
  double min_duration = 0.0;
  double loop_ref = 1.0;   // loop-closure annotation epochs
  double loop_match = 0.0; // relative to the dataset end when negative

  Vec3 omega_at(double t) const {
    Vec3 w = Vec3::Zero();
    for (const auto& b : bursts) w += b.axis * b.rate_at(t);
    return w;
  }
  void kinematics_at(double t, Vec3* p, Vec3* v, Vec3* a) const {
    *p = *v = *a = Vec3::Zero();
    for (const auto& m : moves) m.accumulate(t, p, v, a);
  }
};

Script walk_script(bool wrist_swing) {
  Script sc;
  auto turn = [&](double t0, double t1, const Vec3& axis, double deg) {
    RotationBurst b;
    b.t0 = t0;
    b.t1 = t1;
    b.axis = axis;
    b.angle = deg * M_PI / 180.0;
    sc.bursts.push_back(b);
  };
  // Settling slews with rest gaps in between; these expose the sensor frame
  // to gravity and the field from varied attitudes. Tilts about the diagonal
  // axes matter: axis-aligned tilts alone leave the gravity directions on a
  // degenerate quadric and the accelerometer affine map stays weakly pinned.
  turn(2.0, 3.0, Vec3::UnitX(), 30.0);
  turn(4.0, 5.0, Vec3::UnitX(), -30.0);
  turn(6.0, 7.0, Vec3::UnitY(), 30.0);
  turn(8.0, 9.0, Vec3::UnitY(), -30.0);
  turn(10.0, 11.0, Vec3::UnitZ(), 45.0);
  turn(12.0, 13.0, Vec3::UnitZ(), -45.0);
  turn(14.0, 15.0, Vec3(1.0, 1.0, 0.0).normalized(), 35.0);
  turn(16.0, 17.0, Vec3(1.0, -1.0, 0.0).normalized(), -35.0);

  struct Leg { double t0, t1; Vec3 delta; };
  const std::vector<Leg> legs = {
      {19.5, 23.5, {4.0, 0.0, 0.0}},
      {26.5, 29.5, {0.0, 3.0, 0.0}},
      {32.5, 36.5, {-4.0, 0.0, 0.0}},
      {39.5, 42.5, {0.0, -3.0, 0.0}},
  };
  for (const Leg& leg : legs) {
    TranslationPrimitive mv;
    mv.t0 = leg.t0;
    mv.t1 = leg.t1;
    mv.delta = leg.delta;
    sc.moves.push_back(mv);

    TranslationPrimitive bob; // gait bounce, keeps walking visibly non-static
    bob.t0 = leg.t0;
    bob.t1 = leg.t1;
    bob.oscillating = true;
    bob.osc_axis = Vec3::UnitZ();
    bob.amp = 0.003;
    bob.freq = 2.0;
    sc.moves.push_back(bob);

    if (wrist_swing) {
      RotationBurst swing;
      swing.t0 = leg.t0;
      swing.t1 = leg.t1;
      swing.axis = Vec3::UnitX();
      swing.oscillating = true;
      swing.amp = 20.0 * M_PI / 180.0;
      swing.freq = 1.0;
      sc.bursts.push_back(swing);
    }
  }
  // Quarter turns while paused at the corners.
  turn(24.5, 25.5, Vec3::UnitZ(), 90.0);
  turn(30.5, 31.5, Vec3::UnitZ(), 90.0);
  turn(37.5, 38.5, Vec3::UnitZ(), 90.0);
  turn(43.5, 44.5, Vec3::UnitZ(), 90.0);

  sc.min_duration = 46.5;
  sc.loop_ref = 1.0;
  sc.loop_match = -1.0;
  return sc;
}

Script phone_script() {
  Script sc;
  TranslationPrimitive lift;
  lift.t0 = 3.0;
  lift.t1 = 4.5;
  lift.delta = Vec3(0.10, 0.05, 0.35);
  sc.moves.push_back(lift);

  RotationBurst tilt;
  tilt.t0 = 3.2;
  tilt.t1 = 4.4;
  tilt.axis = Vec3::UnitX();
  tilt.angle = 40.0 * M_PI / 180.0;
  sc.bursts.push_back(tilt);

  RotationBurst wiggle;
  wiggle.t0 = 5.5;
  wiggle.t1 = 7.5;
  wiggle.axis = Vec3::UnitZ();
  wiggle.oscillating = true;
  wiggle.amp = 8.0 * M_PI / 180.0;
  wiggle.freq = 0.8;
  sc.bursts.push_back(wiggle);

  RotationBurst back = tilt;
  back.t0 = 9.6;
  back.t1 = 10.8;
  back.angle = -tilt.angle;
  sc.bursts.push_back(back);

  TranslationPrimitive replace;
  replace.t0 = 9.5;
  replace.t1 = 11.0;
  replace.delta = Vec3(-0.07, -0.03, -0.35); // lands 3.6 cm from the start
  sc.moves.push_back(replace);

  sc.min_duration = 13.0;
  sc.loop_ref = 1.0;
  sc.loop_match = -1.0;
  return sc;
}

} // namespace

Vec3 FieldMap::query(double t) const {
  const double tc = std::clamp(t, span_start, span_end);
  Vec3 f = Vec3::Zero();
  bool found = false;
  for (const auto& r : regions) {
    if (tc >= r.t_start - kTimeEps && tc <= r.t_end + kTimeEps) {
      f = r.field;
      found = true;
      break;
    }
  }
  if (!found) throw InputError("field map has no region for the query time");
  for (const auto& d : disturbances) {
    if (d.kind == FieldDisturbance::Kind::Step) {
      if (t >= d.t) f += d.delta;
    } else {
      const double u =
          d.duration > 0.0 ? std::clamp((t - d.t) / d.duration, 0.0, 1.0)
                           : (t >= d.t ? 1.0 : 0.0);
      f += u * d.delta;
    }
  }
  return f;
}

void FieldMap::validate() const {
  if (regions.empty()) throw InputError("field map needs at least one region");
  double cursor = span_start;
  for (const auto& r : regions) {
    if (std::abs(r.t_start - cursor) > 1e-6) {
      throw InputError("field map regions must tile the span without gaps");
    }
    if (r.t_end <= r.t_start) throw InputError("field map region is empty");
    cursor = r.t_end;
  }
  if (std::abs(cursor - span_end) > 1e-6) {
    throw InputError("field map regions do not cover the span");
  }
}

FieldMap uniform_field(const Vec3& field, double t_start, double t_end) {
  FieldMap map;
  map.span_start = t_start;
  map.span_end = t_end;
  map.regions.push_back({t_start, t_end, field});
  return map;
}

FieldMap inject_disturbance(const FieldMap& map, FieldDisturbance::Kind kind,
                            double t, double duration, const Vec3& delta) {
  if (t < map.span_start - kTimeEps || t > map.span_end + kTimeEps) {
    throw InputError("disturbance time outside the field map span");
  }
  if (kind == FieldDisturbance::Kind::Ramp) {
    if (duration <= 0.0) throw InputError("ramp disturbance needs a positive duration");
    if (t + duration > map.span_end + kTimeEps) {
      throw InputError("ramp disturbance extends past the field map span");
    }
  }
  FieldMap out = map;
  out.disturbances.push_back({kind, t, duration, delta});
  return out;
}

CalibrationParameters draw_truth_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto sym = [&](double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::uniform_int_distribution<int> sign(0, 1);
    const double m = mag(rng);
    return sign(rng) == 0 ? m : -m;
  };
  auto sym3 = [&](double lo, double hi) {
    return Vec3(sym(lo, hi), sym(lo, hi), sym(lo, hi));
  };

  CalibrationParameters p = CalibrationParameters::identity();
  p.b_a = sym3(0.05, 0.2);
  p.gain_a = Vec3::Ones() + sym3(0.005, 0.02);
  p.lower_a = sym3(0.002, 0.0087);
  p.b_w = sym3(0.3 * M_PI / 180.0, 1.0 * M_PI / 180.0);
  p.gain_w = Vec3::Ones() + sym3(0.005, 0.02);
  p.lower_w = sym3(0.002, 0.0087);
  p.r_w = sym3(0.002, 0.0087);
  p.G_w = Mat3::Zero();
  p.D_m = Mat3::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.D_m(r, c) += sym(0.01, 0.05);
  }
  p.o_m = sym3(0.3, 0.9);
  return p;
}

ScenarioTruth generate_truth(ScenarioKind scenario, double duration,
                             double rate, uint64_t seed) {
  if (!(duration > 0.0) || !(rate > 0.0)) {
    throw InputError("scenario duration and rate must be positive");
  }
  Script sc;
  switch (scenario) {
    case ScenarioKind::TorsoWalk: sc = walk_script(false); break;
    case ScenarioKind::PhoneCheck: sc = phone_script(); break;
    case ScenarioKind::WristSwing: sc = walk_script(true); break;
  }
  if (duration < sc.min_duration) {
    throw InputError("duration too short for the scenario script");
  }

  ScenarioTruth truth;
  truth.params = draw_truth_params(seed);
  truth.field = uniform_field(Vec3(0.43, 0.12, -0.89), 0.0, duration);
  truth.loops.push_back(
      {sc.loop_ref, duration + sc.loop_match, truth.noise.sigma_cupt});

  const size_t n = static_cast<size_t>(std::llround(duration * rate));
  const double h = 1.0 / rate;
  const Vec3 g_w(0.0, 0.0, -truth.g_local);

  truth.samples.resize(n);
  UnitQuaternion q = UnitQuaternion::identity();
  Vec3 w_prev = sc.omega_at(0.0);
  for (size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    TruthSample& s = truth.samples[k];
    s.t = t;
    s.w = sc.omega_at(t);
    if (k > 0) q = q * quat_exp(0.5 * h * (w_prev + s.w));
    w_prev = s.w;
    s.q = q;

    Vec3 a_w;
    sc.kinematics_at(t, &s.p, &s.v, &a_w);
    const Mat3 R = q.to_matrix(); // body to world
    s.f = R.transpose() * (a_w - g_w);
    s.m = R.transpose() * truth.field.query(t);
  }
  return truth;
}

ImuDataset corrupt(const ScenarioTruth& truth, uint64_t seed) {
  truth.noise.validate(false);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw3 = [&](double sigma) {
    const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
    return Vec3(sigma * x, sigma * y, sigma * z);
  };

  ImuDataset out;
  out.samples.reserve(truth.samples.size());
  for (const TruthSample& s : truth.samples) {
    ImuSample m;
    m.t = s.t;
    m.accel = apply_accel(truth.params, s.f) + draw3(truth.noise.sigma_a);
    m.gyro = apply_gyro(truth.params, s.w, s.f) + draw3(truth.noise.sigma_w);
    m.mag = apply_mag(truth.params, s.m) + draw3(truth.noise.sigma_m);
    out.samples.push_back(m);
  }
  return out;
}

} // namespace imucal
