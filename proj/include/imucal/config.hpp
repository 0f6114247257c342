#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "imucal/estimator.hpp"
#include "imucal/simulator.hpp"

namespace imucal {

struct DisturbanceSpec {
  bool enabled = false;
  FieldDisturbance::Kind kind = FieldDisturbance::Kind::Step;
  double t = 0.0;
  double duration = 0.0;
  Vec3 delta = Vec3::Zero();
};

struct SimulationConfig {
  ScenarioKind scenario = ScenarioKind::TorsoWalk;
  double duration = 60.0;
  double rate = 100.0;
  std::uint64_t seed = 1;
  DisturbanceSpec disturbance;
};

/// Everything the pipeline commands can be configured with. Every key is
/// optional and falls back to the defaults below; unknown keys anywhere in
/// the document are rejected.
struct PipelineConfig {
  CalibrationConfig calibration;
  SimulationConfig simulation;
  std::optional<UnitQuaternion> initial_attitude;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

} // namespace imucal
