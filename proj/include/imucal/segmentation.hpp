#pragma once

#include <vector>

#include "imucal/core.hpp"

namespace imucal {

struct StaticInterval {
  double t_start = 0.0;
  double t_end = 0.0;
};

struct FieldSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  bool assumed_homogeneous = true;
};

/// Epoch pair claiming the sensor returned near its t_ref position.
struct LoopClosure {
  double t_ref = 0.0;
  double t_match = 0.0;
  double sigma = 0.10; // metres
};

struct SegmentationConfig {
  double static_window = 0.5;                  // s
  double thr_gyro = 3.0 * M_PI / 180.0;        // rad/s, mean gyro norm
  double thr_accel = 0.1;                      // m/s^2, stddev of |y_a|
  double min_static_duration = 0.3;            // s
  double field_tolerance = 0.05;               // fraction of median |y_m|
  double field_quiet_gyro = 10.0 * M_PI / 180.0; // rad/s, drift test gate
  double field_consistency_horizon = 0.1;      // s, direction-vs-gyro check
  double field_consistency_factor = 3.0;       // multiples of the drift band
  double min_segment_duration = 0.2;           // s, shorter pieces excluded
};

enum class LoopClosureMode { Explicit, Auto, Off };

struct LoopClosureConfig {
  LoopClosureMode mode = LoopClosureMode::Explicit;
  std::vector<LoopClosure> annotations; // used in Explicit mode
  double sigma = 0.10;                  // default annotation sigma, m
  double radius = 1.0;                  // auto-mode match radius, m
};

/// Sliding-window quasi-static detector: a window qualifies when the mean
/// gyro norm stays below thr_gyro and the standard deviation of |y_a|
/// stays below thr_accel; adjacent qualifying windows merge and short
/// intervals are discarded.
std::vector<StaticInterval> detect_static(const ImuDataset& dataset,
                                          const SegmentationConfig& cfg);

/// Splits the timeline into stretches where the magnetic field can be
/// assumed homogeneous. Raw signals only; runs before any calibration.
std::vector<FieldSegment> segment_field(const ImuDataset& dataset,
                                        const SegmentationConfig& cfg);

/// Explicit annotations validate and pass through; auto mode dead-reckons
/// coarsely (identity calibration) and pairs the first static interval
/// with later static intervals that come back within cfg.radius.
std::vector<LoopClosure> find_loop_closures(
    const ImuDataset& dataset, const std::vector<StaticInterval>& statics,
    const LoopClosureConfig& cfg, double g_local = kDefaultGravity);

} // namespace imucal
