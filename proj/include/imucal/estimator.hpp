#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imucal/residuals.hpp"

namespace imucal {

/// Per-parameter-group L2 weights pulling the estimate toward its initial
/// value. Groups with real excitation barely feel the pull (curvature wins
/// by many orders of magnitude); unexcited groups stay put instead of
/// random-walking along flat cost directions.
///
/// The relative sizes follow the spread expected of each group on a consumer
/// MEMS unit: biases move freely, gains and the small misalignment angles
/// are manufactured tight, the soft-iron matrix sits in between, and
/// hard-iron offsets can be a large fraction of the field. The overall scale
/// is kept a few orders below typical data curvature so that on a
/// well-excited recording the pull shifts the optimum by far less than the
/// statistical error.
struct L2Lambda {
  double b_a = 2.5e-3;
  double gain_a = 0.25;
  double lower_a = 1.0;
  double b_w = 0.3;
  double gain_w = 0.25;
  double lower_w = 1.0;
  double r_w = 1.0;
  double g_w = 1.0;
  double d_m = 0.04;
  double o_m = 1e-4;

  /// Expanded to the 42-parameter packing order.
  Eigen::Matrix<double, kNumParams, 1> diagonal() const;
};

struct RobustConfig {
  bool enabled = true;
  double huber_k = 1.345;
  double tukey_c = 4.685;
  double sigma_floor = 1.0;    // floor on the whitened-residual scale
  L2Lambda l2_lambda;
  bool glr_enabled = true;
  double glr_quantile = 0.99;  // per-window false-alarm target
  size_t glr_window = 50;      // fast-pair residual series
  size_t glr_window_slow = 20; // slow-pair residual series
};

struct EstimatorConfig {
  int max_iterations = 50;
  double tolerance = 1e-8; // step-norm convergence threshold
};

/// 1 inside the k*sigma band, k*sigma/|r| outside.
double huber_weight(double r_norm, double sigma, double k);

/// Smooth redescender: (1 - (r/(c*sigma))^2)^2 inside, exactly 0 outside.
double tukey_weight(double r_norm, double sigma, double c);

struct NormalSystem {
  Eigen::Matrix<double, kNumParams, kNumParams> N;
  Eigen::Matrix<double, kNumParams, 1> rhs;
  double cost = 0.0;
  std::vector<double> r_norm; // whitened residual norm per constraint
  size_t dropped = 0;         // constraints with unusable noise
};

/// Weighted Gauss-Helmert normal equations at p, including the L2 pull
/// toward `reference` (N += diag(lambda), rhs -= diag(lambda) (p - ref),
/// cost += quadratic prior). Constraint noise blocks are computed on demand
/// when a constraint does not carry one yet.
NormalSystem assemble(const std::vector<Constraint>& constraints,
                      const CalibrationParameters& p, const ImuDataset& dataset,
                      const std::vector<double>& weights,
                      const NoiseModel& noise = NoiseModel{},
                      const ConstraintConfig& ccfg = ConstraintConfig{},
                      double g_local = kDefaultGravity,
                      const L2Lambda& lambda = L2Lambda{},
                      const CalibrationParameters& reference =
                          CalibrationParameters::identity());

/// Solves N dx = rhs; throws NumericalError with the smallest eigenvalue
/// estimate when the system is not positive definite.
Eigen::Matrix<double, kNumParams, 1> solve_step(
    const Eigen::Matrix<double, kNumParams, kNumParams>& N,
    const Eigen::Matrix<double, kNumParams, 1>& rhs);

struct GlrWindow {
  size_t begin = 0; // [begin, end) into the scanned series
  size_t end = 0;
  double statistic = 0.0;
  double threshold = 0.0;
};

/// Scans sliding windows of a chained relative-residual series. The window
/// sum telescopes, so under the null it is zero-mean with covariance given
/// by the two window-end terms; its whitened energy is chi-square with 3
/// degrees of freedom and windows above the requested quantile are flagged.
std::vector<GlrWindow> glr_scan(const std::vector<Vec3>& residuals,
                                const std::vector<Mat3>& covariances,
                                size_t window, double quantile);

enum class SolveStatus { Converged, MaxIterations, Diverged };

const char* to_string(SolveStatus status);

struct KindStats {
  size_t count = 0;
  double rms_whitened = 0.0;
  double mean_weight = 1.0;
  double robust_sigma = 1.0;
};

struct GlrFlag {
  double t_start = 0.0;
  double t_end = 0.0;
  bool fast = false;
  double statistic = 0.0;
  double threshold = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct EstimationReport {
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  double final_cost = 0.0;
  double final_step_norm = 0.0;
  std::vector<IterationRecord> trace;
  size_t dropped_constraints = 0;
  size_t glr_removed = 0;
  std::vector<GlrFlag> glr_flags;
  std::map<std::string, KindStats> kind_stats;
  std::vector<std::string> warnings;
  Eigen::Matrix<double, kNumParams, 1> sigma; // sqrt diag of the inverse normal matrix
};

struct CalibrationConfig {
  NoiseModel noise;
  SegmentationConfig segmentation;
  ConstraintConfig constraints;
  RobustConfig robust;
  EstimatorConfig estimator;
  LoopClosureConfig loops;
  double g_local = kDefaultGravity;
  CalibrationParameters initial = CalibrationParameters::identity();
};

struct CalibrationResult {
  CalibrationParameters params;
  EstimationReport report;
  ConstraintSet constraints;
};

/// Full batch pipeline: segmentation, constraint building, robust IRLS with
/// backtracking, disturbance scan, final refinement.
CalibrationResult calibrate(const ImuDataset& dataset,
                            const CalibrationConfig& cfg);

} // namespace imucal
