#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "imucal/config.hpp"
#include "imucal/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string input;
  std::string output = ".";
  std::string params;
  std::string truth;
  std::string dataset;
  std::string nav_before;
  std::uint64_t seed = 0;
  bool verbose = false;
};

imucal::PipelineConfig load_or_default(const Options& o) {
  if (o.config.empty()) return {};
  return imucal::load_config(o.config);
}

fs::path out_file(const Options& o, const char* name) {
  fs::create_directories(o.output);
  return fs::path(o.output) / name;
}

void apply_field(imucal::ScenarioTruth* truth) {
  for (imucal::TruthSample& s : truth->samples) {
    s.m = s.q.to_matrix().transpose() * truth->field.query(s.t);
  }
}

int cmd_simulate(const Options& o, bool seed_given) {
  imucal::PipelineConfig cfg = load_or_default(o);
  if (seed_given) cfg.simulation.seed = o.seed;
  const imucal::SimulationConfig& sim = cfg.simulation;

  imucal::ScenarioTruth truth = imucal::generate_truth(
      sim.scenario, sim.duration, sim.rate, sim.seed);
  truth.noise = cfg.calibration.noise;
  if (sim.disturbance.enabled) {
    truth.field = imucal::inject_disturbance(
        truth.field, sim.disturbance.kind, sim.disturbance.t,
        sim.disturbance.duration, sim.disturbance.delta);
    apply_field(&truth);
  }
  const imucal::ImuDataset dataset = imucal::corrupt(truth, sim.seed);

  imucal::write_dataset_csv(out_file(o, "dataset.csv").string(), dataset);
  imucal::write_truth_csv(out_file(o, "truth.csv").string(), truth);
  imucal::write_truth_params_json(out_file(o, "truth_params.json").string(),
                                  truth.params, truth.noise, truth.g_local);
  if (o.verbose) {
    std::cout << "simulate: wrote " << dataset.samples.size()
              << " samples to " << o.output << "\n";
  }
  return 0;
}

int cmd_calibrate(const Options& o) {
  const imucal::PipelineConfig cfg = load_or_default(o);
  const imucal::ImuDataset dataset = imucal::read_dataset_csv(o.input);
  const imucal::CalibrationResult result =
      imucal::calibrate(dataset, cfg.calibration);

  imucal::write_params_json(out_file(o, "params.json").string(), result.params);
  imucal::write_report_json(out_file(o, "report.json").string(), result.report);

  for (const std::string& w : result.report.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  if (o.verbose) {
    for (const imucal::IterationRecord& it : result.report.trace) {
      std::cout << "iteration " << it.iteration << ": cost " << it.cost
                << ", step " << it.step_norm
                << (it.accepted ? "" : " (rejected)") << "\n";
    }
    std::cout << "calibrate: " << imucal::to_string(result.report.status)
              << " after " << result.report.iterations << " iterations\n";
  }
  return result.report.status == imucal::SolveStatus::Diverged ? 3 : 0;
}

int cmd_navigate(const Options& o) {
  const imucal::PipelineConfig cfg = load_or_default(o);
  const imucal::CalibrationParameters params = imucal::read_params_json(o.params);
  const imucal::ImuDataset dataset = imucal::read_dataset_csv(o.input);
  const imucal::Trajectory traj = imucal::mechanize(
      dataset, params, cfg.calibration.g_local, cfg.initial_attitude);
  imucal::write_trajectory_csv(out_file(o, "trajectory.csv").string(), traj);
  if (o.verbose) {
    std::cout << "navigate: wrote " << traj.size() << " epochs\n";
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  const imucal::PipelineConfig cfg = load_or_default(o);
  const double g = cfg.calibration.g_local;

  const imucal::TruthRecords truth = imucal::read_truth_csv(o.truth);
  const imucal::ImuDataset dataset = imucal::read_dataset_csv(o.dataset);
  const imucal::CalibrationParameters params = imucal::read_params_json(o.params);

  imucal::NavSolution reference;
  reference.traj = truth.traj;
  reference.accel = truth.f;
  reference.gyro = truth.w;

  imucal::NavSolution after;
  after.traj = imucal::read_trajectory_csv(o.input);
  imucal::NavSolution before;
  const imucal::CalibrationParameters identity =
      imucal::CalibrationParameters::identity();
  before.traj = o.nav_before.empty()
                    ? imucal::mechanize(dataset, identity, g, cfg.initial_attitude)
                    : imucal::read_trajectory_csv(o.nav_before);

  for (const imucal::ImuSample& s : dataset.samples) {
    before.accel.push_back(s.accel);
    before.gyro.push_back(s.gyro);
    const imucal::Vec3 f = imucal::correct_accel(params, s.accel);
    after.accel.push_back(f);
    after.gyro.push_back(imucal::correct_gyro(params, s.gyro, f));
  }

  imucal::ErrorCurves curves;
  const imucal::MetricsReport report =
      imucal::evaluate(before, after, reference, g, &curves);
  imucal::write_metrics_json(out_file(o, "metrics.json").string(), report);
  imucal::write_curves_csv(out_file(o, "curves.csv").string(), curves);
  if (o.verbose) {
    std::cout << "evaluate: position @10s " << report.position_10s.before
              << " -> " << report.position_10s.after << " m ("
              << report.position_10s.improvement << "% improvement)\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"9-DoF IMU in-use self-calibration pipeline"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON configuration file");
    cmd->add_option("--output", o.output, "output directory");
    cmd->add_flag("--verbose", o.verbose, "print progress details");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a scripted dataset");
  add_common(sim);
  CLI::Option* seed_opt =
      sim->add_option("--seed", o.seed, "override the simulation seed");

  CLI::App* cal = app.add_subcommand("calibrate", "estimate sensor parameters");
  add_common(cal);
  cal->add_option("--input", o.input, "dataset CSV")->required();

  CLI::App* nav = app.add_subcommand("navigate", "integrate a trajectory");
  add_common(nav);
  nav->add_option("--input", o.input, "dataset CSV")->required();
  nav->add_option("--params", o.params, "calibration parameters JSON")->required();

  CLI::App* eva = app.add_subcommand("evaluate", "score against the reference");
  add_common(eva);
  eva->add_option("--input", o.input, "calibrated trajectory CSV")->required();
  eva->add_option("--truth", o.truth, "reference truth CSV")->required();
  eva->add_option("--dataset", o.dataset, "dataset CSV")->required();
  eva->add_option("--params", o.params, "calibration parameters JSON")->required();
  eva->add_option("--nav-before", o.nav_before,
                  "uncalibrated trajectory CSV (defaults to identity-parameter "
                  "mechanization of the dataset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, seed_opt->count() > 0);
    if (cal->parsed()) return cmd_calibrate(o);
    if (nav->parsed()) return cmd_navigate(o);
    if (eva->parsed()) return cmd_evaluate(o);
  } catch (const imucal::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
