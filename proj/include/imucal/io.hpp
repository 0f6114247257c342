#pragma once

#include <string>
#include <vector>

#include "imucal/core.hpp"
#include "imucal/estimator.hpp"
#include "imucal/navigation.hpp"
#include "imucal/sensor_models.hpp"
#include "imucal/simulator.hpp"

namespace imucal {

/// CSV layouts (header row mandatory, '.' decimal point, shortest
/// round-trip number formatting so rewrites are byte-stable):
///   dataset.csv     t,ax,ay,az,gx,gy,gz,mx,my,mz
///   trajectory.csv  t,qw,qx,qy,qz,vx,vy,vz,px,py,pz
///   truth.csv       trajectory columns + fx,fy,fz,wx,wy,wz,mx,my,mz
/// Parse failures report the offending line number.

ImuDataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const ImuDataset& dataset);

Trajectory read_trajectory_csv(const std::string& path);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

/// Reference states plus the clean body-frame signals they came from.
struct TruthRecords {
  Trajectory traj;
  std::vector<Vec3> f;
  std::vector<Vec3> w;
  std::vector<Vec3> m;
};

TruthRecords read_truth_csv(const std::string& path);
void write_truth_csv(const std::string& path, const ScenarioTruth& truth);

CalibrationParameters read_params_json(const std::string& path);
void write_params_json(const std::string& path,
                       const CalibrationParameters& params);
void write_truth_params_json(const std::string& path,
                             const CalibrationParameters& params,
                             const NoiseModel& noise, double g_local);

void write_report_json(const std::string& path,
                       const EstimationReport& report);

/// Metrics serialized in report row order: acceleration, angular rate,
/// orientation, velocity @10s, position @10s, integrated acceleration.
void write_metrics_json(const std::string& path, const MetricsReport& report);

void write_curves_csv(const std::string& path, const ErrorCurves& curves);

} // namespace imucal
