#pragma once

#include <cstdint>
#include <vector>

#include "imucal/core.hpp"
#include "imucal/segmentation.hpp"
#include "imucal/sensor_models.hpp"
#include "imucal/strapdown.hpp"

namespace imucal {

enum class ScenarioKind { TorsoWalk, PhoneCheck, WristSwing };

struct FieldRegion {
  double t_start = 0.0;
  double t_end = 0.0;
  Vec3 field = Vec3::Zero();
};

struct FieldDisturbance {
  enum class Kind { Step, Ramp };
  Kind kind = Kind::Step;
  double t = 0.0;        // step time / ramp start
  double duration = 0.0; // ramp length, ignored for steps
  Vec3 delta = Vec3::Zero();
};

/// Piecewise-constant world field over a time span, plus additive step and
/// ramp disturbances.
struct FieldMap {
  std::vector<FieldRegion> regions; // non-overlapping, covering the span
  std::vector<FieldDisturbance> disturbances;
  double span_start = 0.0;
  double span_end = 0.0;

  Vec3 query(double t) const;
  void validate() const; // exactly one region per query time
};

FieldMap uniform_field(const Vec3& field, double t_start, double t_end);

/// Returns a copy of the map with the disturbance appended. Times outside
/// the map's span are rejected.
FieldMap inject_disturbance(const FieldMap& map, FieldDisturbance::Kind kind,
                            double t, double duration, const Vec3& delta);

struct TruthSample {
  double t = 0.0;
  UnitQuaternion q; // body to world
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  Vec3 f = Vec3::Zero(); // specific force, sensor frame
  Vec3 w = Vec3::Zero(); // angular rate, sensor frame
  Vec3 m = Vec3::Zero(); // field, sensor frame
};

struct ScenarioTruth {
  std::vector<TruthSample> samples;
  FieldMap field;
  CalibrationParameters params;
  NoiseModel noise;
  double g_local = kDefaultGravity;
  std::vector<LoopClosure> loops; // closures known from the script
};

/// Scripted rigid-body scenarios sampled at `rate`. Orientation truth is the
/// discrete midpoint-rate integral of the scripted rates, so strapdown
/// replays of noise-free data land on the truth exactly; positions follow
/// C3 polynomial profiles with analytic derivatives. True calibration
/// parameters are drawn from the seed.
ScenarioTruth generate_truth(ScenarioKind scenario, double duration,
                             double rate, uint64_t seed);

/// Truth parameter draw used by generate_truth: every component bounded away
/// from zero with random sign, magnitudes at industrial-MEMS scale.
CalibrationParameters draw_truth_params(uint64_t seed);

/// Forward models plus white noise from truth.noise.
ImuDataset corrupt(const ScenarioTruth& truth, uint64_t seed);

} // namespace imucal
