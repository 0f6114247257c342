#pragma once

#include <optional>
#include <vector>

#include "imucal/core.hpp"
#include "imucal/sensor_models.hpp"
#include "imucal/strapdown.hpp"

namespace imucal {

/// Navigation states in a local-level frame anchored at the first epoch:
/// z up, heading datum arbitrary, zero initial velocity and position.
struct Trajectory {
  std::vector<double> t;
  std::vector<UnitQuaternion> q; // body to local
  std::vector<Vec3> v;
  std::vector<Vec3> p;

  std::size_t size() const { return t.size(); }
};

/// Corrects the dataset with `params` and integrates the strapdown states.
/// Roll and pitch come from levelling over the leading static interval,
/// heading starts at zero. Without a leading static interval an explicit
/// initial attitude is required; otherwise the run cannot be initialized
/// and a NumericalError is thrown.
Trajectory mechanize(const ImuDataset& dataset,
                     const CalibrationParameters& params,
                     double g_local = kDefaultGravity,
                     const std::optional<UnitQuaternion>& initial_attitude =
                         std::nullopt);

/// A trajectory together with the corrected body-frame signals it was
/// integrated from; the reference variant carries the true signals.
struct NavSolution {
  Trajectory traj;
  std::vector<Vec3> accel; // specific force, m/s^2
  std::vector<Vec3> gyro;  // rad/s
};

struct MetricValue {
  double before = 0.0;
  double after = 0.0;
  double improvement = 0.0; // percent
};

/// Error summary in report row order.
struct MetricsReport {
  MetricValue accel;            // m/s^2
  MetricValue gyro_deg;         // deg/s
  MetricValue orientation_deg;  // deg
  MetricValue velocity_10s;     // m/s
  MetricValue position_10s;     // m
  MetricValue integrated_accel; // m/s
};

/// Per-window error series for plotting, sampled at the window start times.
struct ErrorCurves {
  std::vector<double> t;
  std::vector<double> vel_before;
  std::vector<double> vel_after;
  std::vector<double> pos_before;
  std::vector<double> pos_after;
};

/// One evaluation column: signal RMSEs plus windowed dead-reckoning errors.
struct MetricsColumn {
  double accel = 0.0;
  double gyro_deg = 0.0;
  double orientation_deg = 0.0;
  double velocity_10s = 0.0;
  double position_10s = 0.0;
  double integrated_accel = 0.0;
};

/// Compares one solution against the reference on a shared timeline.
///
/// Signal rows are pooled per-axis RMSEs. Orientation is the RMS rotation
/// angle between the attitudes after removing the constant datum offset at
/// the first epoch. The @10s rows restart dead reckoning at every window
/// start (stride 1 s): each solution's window increment is expressed in its
/// own window-start body frame with the known-gravity contribution removed,
/// which cancels the heading datum. Position windows keep the solution's
/// standing velocity error (a constant 0.1 m/s error grows to 1.0 m);
/// velocity windows measure the velocity gained over the window. The
/// integrated-acceleration row compares the magnitude of the window's
/// rotated specific-force integral.
MetricsColumn evaluate_against(const NavSolution& solution,
                               const NavSolution& reference,
                               double g_local = kDefaultGravity,
                               std::vector<double>* vel_curve = nullptr,
                               std::vector<double>* pos_curve = nullptr,
                               std::vector<double>* window_times = nullptr);

double improvement_percent(double before, double after);

/// Full before/after report in table row order; timelines must match.
MetricsReport evaluate(const NavSolution& before, const NavSolution& after,
                       const NavSolution& reference,
                       double g_local = kDefaultGravity,
                       ErrorCurves* curves = nullptr);

} // namespace imucal
