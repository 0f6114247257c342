#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "imucal/core.hpp"
#include "imucal/segmentation.hpp"
#include "imucal/sensor_models.hpp"
#include "imucal/strapdown.hpp"

namespace imucal {

enum class ConstraintKind {
  GravityMagnitude,
  ZeroRate,
  MagRelative,
  Levelling,
  Zupt,
  Cupt,
};

const char* to_string(ConstraintKind kind);

struct Constraint {
  ConstraintKind kind = ConstraintKind::GravityMagnitude;
  size_t i = 0;                  // first sample index (the only one for point kinds)
  size_t j = 0;                  // second sample index; spans integrate over [i, j]
  size_t anchor_begin = 0;       // inclusive sample range whose mean corrected
  size_t anchor_end = 0;         // accel fixes the gravity direction (Zupt/Cupt)
  double t_start = 0.0;
  double t_end = 0.0;
  int dim = 1;
  bool fast = false;             // MagRelative stride class
  size_t segment = 0;            // field segment id for MagRelative
  double extra_sigma = 0.0;      // loop-closure slack, metres (Cupt only)
  Eigen::VectorXd sigma;         // per-component stddev, sqrt of diag(noise)
  Eigen::MatrixXd noise;         // residual covariance, filled by the estimator
};

struct ConstraintConfig {
  double static_subsample_hz = 10.0;
  double mag_fast_dt = 0.01;
  double mag_fast_stride = 0.01;
  double mag_slow_dt = 0.1;
  double mag_slow_stride = 0.1;
  size_t long_span_threshold = 64; // samples; longer spans use propagated noise
};

struct ConstraintSet {
  std::vector<Constraint> constraints;
  std::vector<StaticInterval> statics;
  std::vector<FieldSegment> segments;
  bool has_statics = false;
  size_t count(ConstraintKind kind) const;
};

/// Corrected signals plus prefix integrals for one parameter vector. Interval
/// rotations and velocity/position increments then cost O(1) per constraint.
class CorrectedPath {
 public:
  CorrectedPath(const ImuDataset& dataset, const CalibrationParameters& p);

  const PathIntegrator& path() const { return path_; }
  size_t size() const { return accel_.size(); }
  const Vec3& accel(size_t i) const { return accel_[i]; }
  const Vec3& gyro(size_t i) const { return gyro_[i]; }
  const Vec3& mag(size_t i) const { return mag_[i]; }
  double time(size_t i) const { return path_.time(i); }
  Vec3 mean_accel(size_t begin, size_t end) const; // inclusive range

 private:
  std::vector<Vec3> accel_, gyro_, mag_;
  std::vector<Vec3> accel_prefix_;
  PathIntegrator path_;
};

// Low-level residuals. All take raw measurements and apply the corrections
// internally so finite differences see the full parameter dependence.

/// Squared corrected specific force against squared local gravity.
double residual_gravity(const CalibrationParameters& p, const Vec3& y_a,
                        double g_local);

/// Corrected angular rate, which should vanish while static.
Vec3 residual_zero_rate(const CalibrationParameters& p, const Vec3& y_w,
                        const Vec3& y_a);

/// Direction mismatch of the corrected unit field across a known rotation:
/// rotate(dq, m_hat_j) - m_hat_i with dq mapping frame-j vectors to frame-i.
Vec3 residual_mag_relative(const CalibrationParameters& p, const Vec3& y_m_i,
                           const Vec3& y_m_j, const UnitQuaternion& dq);

/// Same construction for the corrected unit specific force between two
/// quasi-static epochs.
Vec3 residual_levelling(const CalibrationParameters& p, const Vec3& y_a_i,
                        const Vec3& y_a_j, const UnitQuaternion& dq);

/// Velocity closure between two rest epochs: the integrated increment must
/// cancel gravity accumulated over the interval (end-frame components).
Vec3 residual_zupt(const DeltaKinematics& kin, const Vec3& g_s);

/// Position closure over a loop: integrated displacement against the
/// gravity parabola (end-frame components).
Vec3 residual_cupt(const DeltaKinematics& kin, const Vec3& g_s);

/// Builds the full constraint list from segmentation output. Noise blocks
/// are left empty; the estimator fills them at its initial linearization.
ConstraintSet build_constraints(const ImuDataset& dataset,
                                const std::vector<StaticInterval>& statics,
                                const std::vector<FieldSegment>& segments,
                                const std::vector<LoopClosure>& loops,
                                const ConstraintConfig& cfg);

/// Residual through the prefix engine (fast path). The parameter dependence
/// lives in the corrected path.
Eigen::VectorXd evaluate_constraint(const Constraint& c,
                                    const CorrectedPath& path, double g_local);

/// Residual by direct local integration of raw samples fetched through
/// `sample`. Reference path used for finite differences over observations.
Eigen::VectorXd evaluate_constraint_raw(
    const Constraint& c, const CalibrationParameters& p,
    const std::function<ImuSample(size_t)>& sample, double g_local);

/// Raw-measurement channels a constraint reads, in B-column order.
/// Channel codes: 0-2 accel, 3-5 gyro, 6-8 mag.
struct TouchedChannel {
  size_t sample;
  int channel;
};
std::vector<TouchedChannel> touched_channels(const Constraint& c);

struct ConstraintJacobians {
  Eigen::MatrixXd A; // dim x 42, d residual / d parameters
  Eigen::MatrixXd B; // dim x touched, d residual / d raw observations
  Eigen::VectorXd w; // residual value
};

/// Central finite differences with step rel_step * max(|x|, 1).
ConstraintJacobians jacobian_constraint(const Constraint& c,
                                        const CalibrationParameters& p,
                                        const ImuDataset& dataset,
                                        double g_local,
                                        double rel_step = 1e-6);

/// Residual covariance B Sigma_Y B^T plus the constraint's own slack term.
/// Short spans difference the observations directly; long spans propagate a
/// 9-state noise model along the corrected path.
Eigen::MatrixXd compute_constraint_noise(const Constraint& c,
                                         const CalibrationParameters& p,
                                         const ImuDataset& dataset,
                                         const CorrectedPath& path,
                                         const NoiseModel& noise,
                                         const ConstraintConfig& cfg,
                                         double g_local);

} // namespace imucal
