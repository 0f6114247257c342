#include "imucal/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace imucal {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw InputError("config section '" + where + "' must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || key == k;
    if (!known) {
      throw InputError("unknown config key '" + where + "." + key + "'");
    }
  }
}

double get_num(const json& obj, const std::string& where, const char* key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw InputError("config key '" + where + "." + key + "' must be a number");
  }
  return v.get<double>();
}

bool get_bool(const json& obj, const std::string& where, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw InputError("config key '" + where + "." + key +
                     "' must be a boolean");
  }
  return v.get<bool>();
}

std::uint64_t get_uint(const json& obj, const std::string& where,
                       const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw InputError("config key '" + where + "." + key +
                     "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_str(const json& obj, const std::string& where, const char* key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw InputError("config key '" + where + "." + key + "' must be a string");
  }
  return v.get<std::string>();
}

Vec3 get_vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() ||
      !v[1].is_number() || !v[2].is_number()) {
    throw InputError("config key '" + where + "' must be a 3-number array");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

void parse_noise(const json& s, NoiseModel* n) {
  check_keys(s, "noise", {"sigma_a", "sigma_w", "sigma_m", "sigma_cupt"});
  n->sigma_a = get_num(s, "noise", "sigma_a", n->sigma_a);
  n->sigma_w = get_num(s, "noise", "sigma_w", n->sigma_w);
  n->sigma_m = get_num(s, "noise", "sigma_m", n->sigma_m);
  n->sigma_cupt = get_num(s, "noise", "sigma_cupt", n->sigma_cupt);
}

void parse_segmentation(const json& s, SegmentationConfig* c) {
  check_keys(s, "segmentation",
             {"static_window", "thr_gyro", "thr_accel", "min_static_duration",
              "field_tolerance", "field_quiet_gyro",
              "field_consistency_horizon", "field_consistency_factor",
              "min_segment_duration"});
  c->static_window = get_num(s, "segmentation", "static_window", c->static_window);
  c->thr_gyro = get_num(s, "segmentation", "thr_gyro", c->thr_gyro);
  c->thr_accel = get_num(s, "segmentation", "thr_accel", c->thr_accel);
  c->min_static_duration =
      get_num(s, "segmentation", "min_static_duration", c->min_static_duration);
  c->field_tolerance =
      get_num(s, "segmentation", "field_tolerance", c->field_tolerance);
  c->field_quiet_gyro =
      get_num(s, "segmentation", "field_quiet_gyro", c->field_quiet_gyro);
  c->field_consistency_horizon = get_num(
      s, "segmentation", "field_consistency_horizon", c->field_consistency_horizon);
  c->field_consistency_factor = get_num(
      s, "segmentation", "field_consistency_factor", c->field_consistency_factor);
  c->min_segment_duration =
      get_num(s, "segmentation", "min_segment_duration", c->min_segment_duration);
}

void parse_constraints(const json& s, ConstraintConfig* c) {
  check_keys(s, "constraints",
             {"static_subsample_hz", "mag_fast_dt", "mag_fast_stride",
              "mag_slow_dt", "mag_slow_stride", "long_span_threshold"});
  c->static_subsample_hz =
      get_num(s, "constraints", "static_subsample_hz", c->static_subsample_hz);
  c->mag_fast_dt = get_num(s, "constraints", "mag_fast_dt", c->mag_fast_dt);
  c->mag_fast_stride =
      get_num(s, "constraints", "mag_fast_stride", c->mag_fast_stride);
  c->mag_slow_dt = get_num(s, "constraints", "mag_slow_dt", c->mag_slow_dt);
  c->mag_slow_stride =
      get_num(s, "constraints", "mag_slow_stride", c->mag_slow_stride);
  c->long_span_threshold = static_cast<size_t>(get_uint(
      s, "constraints", "long_span_threshold", c->long_span_threshold));
}

void parse_l2_lambda(const json& v, L2Lambda* l) {
  if (v.is_number()) {
    const double u = v.get<double>();
    if (!(u >= 0.0)) throw InputError("robust.l2_lambda must be non-negative");
    *l = L2Lambda{u, u, u, u, u, u, u, u, u, u};
    return;
  }
  if (!v.is_object()) {
    throw InputError("robust.l2_lambda must be a number or an object");
  }
  check_keys(v, "robust.l2_lambda",
             {"b_a", "gain_a", "lower_a", "b_w", "gain_w", "lower_w", "r_w",
              "g_w", "d_m", "o_m"});
  l->b_a = get_num(v, "robust.l2_lambda", "b_a", l->b_a);
  l->gain_a = get_num(v, "robust.l2_lambda", "gain_a", l->gain_a);
  l->lower_a = get_num(v, "robust.l2_lambda", "lower_a", l->lower_a);
  l->b_w = get_num(v, "robust.l2_lambda", "b_w", l->b_w);
  l->gain_w = get_num(v, "robust.l2_lambda", "gain_w", l->gain_w);
  l->lower_w = get_num(v, "robust.l2_lambda", "lower_w", l->lower_w);
  l->r_w = get_num(v, "robust.l2_lambda", "r_w", l->r_w);
  l->g_w = get_num(v, "robust.l2_lambda", "g_w", l->g_w);
  l->d_m = get_num(v, "robust.l2_lambda", "d_m", l->d_m);
  l->o_m = get_num(v, "robust.l2_lambda", "o_m", l->o_m);
  if (l->diagonal().minCoeff() < 0.0) {
    throw InputError("robust.l2_lambda entries must be non-negative");
  }
}

void parse_robust(const json& s, RobustConfig* c) {
  check_keys(s, "robust",
             {"enabled", "huber_k", "tukey_c", "sigma_floor", "glr_enabled",
              "glr_quantile", "glr_window", "glr_window_slow", "l2_lambda"});
  c->enabled = get_bool(s, "robust", "enabled", c->enabled);
  c->huber_k = get_num(s, "robust", "huber_k", c->huber_k);
  c->tukey_c = get_num(s, "robust", "tukey_c", c->tukey_c);
  c->sigma_floor = get_num(s, "robust", "sigma_floor", c->sigma_floor);
  c->glr_enabled = get_bool(s, "robust", "glr_enabled", c->glr_enabled);
  c->glr_quantile = get_num(s, "robust", "glr_quantile", c->glr_quantile);
  c->glr_window =
      static_cast<size_t>(get_uint(s, "robust", "glr_window", c->glr_window));
  c->glr_window_slow = static_cast<size_t>(
      get_uint(s, "robust", "glr_window_slow", c->glr_window_slow));
  if (s.contains("l2_lambda")) parse_l2_lambda(s.at("l2_lambda"), &c->l2_lambda);
}

void parse_estimator(const json& s, EstimatorConfig* c) {
  check_keys(s, "estimator", {"max_iterations", "tolerance"});
  c->max_iterations = static_cast<int>(get_uint(
      s, "estimator", "max_iterations", static_cast<std::uint64_t>(c->max_iterations)));
  c->tolerance = get_num(s, "estimator", "tolerance", c->tolerance);
}

void parse_loops(const json& s, LoopClosureConfig* c) {
  check_keys(s, "loop_closures", {"mode", "sigma", "radius", "annotations"});
  const std::string mode = get_str(s, "loop_closures", "mode", "explicit");
  if (mode == "explicit") {
    c->mode = LoopClosureMode::Explicit;
  } else if (mode == "auto") {
    c->mode = LoopClosureMode::Auto;
  } else if (mode == "off") {
    c->mode = LoopClosureMode::Off;
  } else {
    throw InputError(
        "config key 'loop_closures.mode' must be one of explicit, auto, off");
  }
  c->sigma = get_num(s, "loop_closures", "sigma", c->sigma);
  c->radius = get_num(s, "loop_closures", "radius", c->radius);
  if (s.contains("annotations")) {
    const json& arr = s.at("annotations");
    if (!arr.is_array()) {
      throw InputError("config key 'loop_closures.annotations' must be an array");
    }
    c->annotations.clear();
    for (const json& a : arr) {
      check_keys(a, "loop_closures.annotations[]", {"t_ref", "t_match", "sigma"});
      LoopClosure lc;
      lc.t_ref = get_num(a, "loop_closures.annotations[]", "t_ref", 0.0);
      lc.t_match = get_num(a, "loop_closures.annotations[]", "t_match", 0.0);
      lc.sigma = get_num(a, "loop_closures.annotations[]", "sigma", c->sigma);
      c->annotations.push_back(lc);
    }
  }
}

void parse_simulation(const json& s, SimulationConfig* c) {
  check_keys(s, "simulation",
             {"scenario", "duration", "rate", "seed", "disturbance"});
  const std::string name = get_str(s, "simulation", "scenario", "torso_walk");
  if (name == "torso_walk") {
    c->scenario = ScenarioKind::TorsoWalk;
  } else if (name == "phone_check") {
    c->scenario = ScenarioKind::PhoneCheck;
  } else if (name == "wrist_swing") {
    c->scenario = ScenarioKind::WristSwing;
  } else {
    throw InputError(
        "config key 'simulation.scenario' must be one of torso_walk, "
        "phone_check, wrist_swing");
  }
  c->duration = get_num(s, "simulation", "duration", c->duration);
  c->rate = get_num(s, "simulation", "rate", c->rate);
  c->seed = get_uint(s, "simulation", "seed", c->seed);
  if (s.contains("disturbance")) {
    const json& d = s.at("disturbance");
    check_keys(d, "simulation.disturbance", {"kind", "t", "duration", "delta"});
    c->disturbance.enabled = true;
    const std::string kind = get_str(d, "simulation.disturbance", "kind", "step");
    if (kind == "step") {
      c->disturbance.kind = FieldDisturbance::Kind::Step;
    } else if (kind == "ramp") {
      c->disturbance.kind = FieldDisturbance::Kind::Ramp;
    } else {
      throw InputError(
          "config key 'simulation.disturbance.kind' must be step or ramp");
    }
    c->disturbance.t = get_num(d, "simulation.disturbance", "t", 0.0);
    c->disturbance.duration =
        get_num(d, "simulation.disturbance", "duration", 0.0);
    if (!d.contains("delta")) {
      throw InputError("config key 'simulation.disturbance.delta' is required");
    }
    c->disturbance.delta =
        get_vec3(d.at("delta"), "simulation.disturbance.delta");
  }
}

} // namespace

PipelineConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "<root>",
             {"gravity", "noise", "segmentation", "constraints", "robust",
              "estimator", "loop_closures", "simulation", "initial_attitude"});

  PipelineConfig cfg;
  cfg.calibration.g_local = get_num(j, "<root>", "gravity", cfg.calibration.g_local);
  if (j.contains("noise")) parse_noise(j.at("noise"), &cfg.calibration.noise);
  if (j.contains("segmentation")) {
    parse_segmentation(j.at("segmentation"), &cfg.calibration.segmentation);
  }
  if (j.contains("constraints")) {
    parse_constraints(j.at("constraints"), &cfg.calibration.constraints);
  }
  if (j.contains("robust")) parse_robust(j.at("robust"), &cfg.calibration.robust);
  if (j.contains("estimator")) {
    parse_estimator(j.at("estimator"), &cfg.calibration.estimator);
  }
  if (j.contains("loop_closures")) {
    parse_loops(j.at("loop_closures"), &cfg.calibration.loops);
  }
  if (j.contains("simulation")) {
    parse_simulation(j.at("simulation"), &cfg.simulation);
  }
  if (j.contains("initial_attitude")) {
    const json& q = j.at("initial_attitude");
    if (!q.is_array() || q.size() != 4 || !q[0].is_number()) {
      throw InputError(
          "config key 'initial_attitude' must be a quaternion [w, x, y, z]");
    }
    cfg.initial_attitude = UnitQuaternion(
        q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
        q[3].get<double>());
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

} // namespace imucal
