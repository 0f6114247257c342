#include "imucal/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace imucal {

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_row(const double* vals, size_t count) {
  std::string row;
  for (size_t i = 0; i < count; ++i) {
    if (i) row += ',';
    row += fmt(vals[i]);
  }
  row += '\n';
  return row;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

class CsvReader {
 public:
  CsvReader(const std::string& path, const std::string& header,
            size_t columns)
      : path_(path), in_(open_in(path)), columns_(columns) {
    std::string first;
    if (!std::getline(in_, first)) {
      throw InputError(path + " line 1: missing header row");
    }
    strip(first);
    if (first != header) {
      throw InputError(path + " line 1: expected header '" + header + "'");
    }
  }

  /// Fills `row` with the next data line; false at end of file.
  bool next(std::vector<double>* row) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      strip(line);
      if (line.empty()) continue;
      parse(line, row);
      return true;
    }
    return false;
  }

 private:
  static void strip(std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  }

  void parse(const std::string& line, std::vector<double>* row) const {
    row->clear();
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      const std::string_view tok(line.data() + start,
                                 (comma == std::string::npos ? line.size()
                                                             : comma) -
                                     start);
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw InputError(path_ + " line " + std::to_string(lineno_) +
                         ": cannot parse '" + std::string(tok) +
                         "' as a number");
      }
      row->push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row->size() != columns_) {
      throw InputError(path_ + " line " + std::to_string(lineno_) +
                       ": expected " + std::to_string(columns_) +
                       " columns, found " + std::to_string(row->size()));
    }
  }

  std::string path_;
  std::ifstream in_;
  size_t columns_;
  size_t lineno_ = 1;
};

constexpr const char* kDatasetHeader = "t,ax,ay,az,gx,gy,gz,mx,my,mz";
constexpr const char* kTrajectoryHeader = "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz";
constexpr const char* kTruthHeader =
    "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz,fx,fy,fz,wx,wy,wz,mx,my,mz";

nlohmann::json vec_json(const Vec3& v) {
  return nlohmann::json{v.x(), v.y(), v.z()};
}

nlohmann::json mat_json(const Mat3& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Vec3 vec_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number()) {
    throw InputError("params field '" + key + "' must be a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Mat3 mat_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) {
    throw InputError("params field '" + key + "' must be a 3x3 matrix");
  }
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) {
      throw InputError("params field '" + key + "' must be a 3x3 matrix");
    }
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::ordered_json params_json(const CalibrationParameters& p) {
  nlohmann::ordered_json j;
  j["b_a"] = vec_json(p.b_a);
  j["gain_a"] = vec_json(p.gain_a);
  j["lower_a"] = vec_json(p.lower_a);
  j["b_w"] = vec_json(p.b_w);
  j["gain_w"] = vec_json(p.gain_w);
  j["lower_w"] = vec_json(p.lower_w);
  j["r_w"] = vec_json(p.r_w);
  j["G_w"] = mat_json(p.G_w);
  j["D_m"] = mat_json(p.D_m);
  j["o_m"] = vec_json(p.o_m);
  return j;
}

nlohmann::json parse_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void dump_json(const std::string& path, const nlohmann::ordered_json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

} // namespace

ImuDataset read_dataset_csv(const std::string& path) {
  CsvReader reader(path, kDatasetHeader, 10);
  ImuDataset ds;
  std::vector<double> r;
  while (reader.next(&r)) {
    ImuSample s;
    s.t = r[0];
    s.accel = {r[1], r[2], r[3]};
    s.gyro = {r[4], r[5], r[6]};
    s.mag = {r[7], r[8], r[9]};
    ds.samples.push_back(s);
  }
  return ds;
}

void write_dataset_csv(const std::string& path, const ImuDataset& dataset) {
  auto out = open_out(path);
  out << kDatasetHeader << '\n';
  for (const ImuSample& s : dataset.samples) {
    const double row[10] = {s.t,
                            s.accel.x(), s.accel.y(), s.accel.z(),
                            s.gyro.x(), s.gyro.y(), s.gyro.z(),
                            s.mag.x(), s.mag.y(), s.mag.z()};
    out << fmt_row(row, 10);
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  CsvReader reader(path, kTrajectoryHeader, 11);
  Trajectory traj;
  std::vector<double> r;
  while (reader.next(&r)) {
    traj.t.push_back(r[0]);
    traj.q.push_back({r[1], r[2], r[3], r[4]});
    traj.v.push_back({r[5], r[6], r[7]});
    traj.p.push_back({r[8], r[9], r[10]});
  }
  return traj;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  auto out = open_out(path);
  out << kTrajectoryHeader << '\n';
  for (size_t k = 0; k < traj.size(); ++k) {
    const UnitQuaternion& q = traj.q[k];
    const double row[11] = {traj.t[k], q.w, q.x, q.y, q.z,
                            traj.v[k].x(), traj.v[k].y(), traj.v[k].z(),
                            traj.p[k].x(), traj.p[k].y(), traj.p[k].z()};
    out << fmt_row(row, 11);
  }
}

TruthRecords read_truth_csv(const std::string& path) {
  CsvReader reader(path, kTruthHeader, 20);
  TruthRecords rec;
  std::vector<double> r;
  while (reader.next(&r)) {
    rec.traj.t.push_back(r[0]);
    rec.traj.q.push_back({r[1], r[2], r[3], r[4]});
    rec.traj.v.push_back({r[5], r[6], r[7]});
    rec.traj.p.push_back({r[8], r[9], r[10]});
    rec.f.push_back({r[11], r[12], r[13]});
    rec.w.push_back({r[14], r[15], r[16]});
    rec.m.push_back({r[17], r[18], r[19]});
  }
  return rec;
}

void write_truth_csv(const std::string& path, const ScenarioTruth& truth) {
  auto out = open_out(path);
  out << kTruthHeader << '\n';
  for (const TruthSample& s : truth.samples) {
    const double row[20] = {s.t,
                            s.q.w, s.q.x, s.q.y, s.q.z,
                            s.v.x(), s.v.y(), s.v.z(),
                            s.p.x(), s.p.y(), s.p.z(),
                            s.f.x(), s.f.y(), s.f.z(),
                            s.w.x(), s.w.y(), s.w.z(),
                            s.m.x(), s.m.y(), s.m.z()};
    out << fmt_row(row, 20);
  }
}

CalibrationParameters read_params_json(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  if (!j.is_object()) throw InputError(path + ": expected a JSON object");
  static const char* kKeys[] = {"b_a", "gain_a", "lower_a", "b_w", "gain_w",
                                "lower_w", "r_w", "G_w", "D_m", "o_m"};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw InputError(path + ": unknown params field '" + key + "'");
  }
  CalibrationParameters p;
  try {
    p.b_a = vec_from_json(j.at("b_a"), "b_a");
    p.gain_a = vec_from_json(j.at("gain_a"), "gain_a");
    p.lower_a = vec_from_json(j.at("lower_a"), "lower_a");
    p.b_w = vec_from_json(j.at("b_w"), "b_w");
    p.gain_w = vec_from_json(j.at("gain_w"), "gain_w");
    p.lower_w = vec_from_json(j.at("lower_w"), "lower_w");
    p.r_w = vec_from_json(j.at("r_w"), "r_w");
    p.G_w = mat_from_json(j.at("G_w"), "G_w");
    p.D_m = mat_from_json(j.at("D_m"), "D_m");
    p.o_m = vec_from_json(j.at("o_m"), "o_m");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return p;
}

void write_params_json(const std::string& path,
                       const CalibrationParameters& params) {
  dump_json(path, params_json(params));
}

void write_truth_params_json(const std::string& path,
                             const CalibrationParameters& params,
                             const NoiseModel& noise, double g_local) {
  nlohmann::ordered_json j;
  j["params"] = params_json(params);
  j["noise"] = {{"sigma_a", noise.sigma_a},
                {"sigma_w", noise.sigma_w},
                {"sigma_m", noise.sigma_m},
                {"sigma_cupt", noise.sigma_cupt}};
  j["gravity"] = g_local;
  dump_json(path, j);
}

void write_report_json(const std::string& path,
                       const EstimationReport& report) {
  nlohmann::ordered_json j;
  j["status"] = to_string(report.status);
  j["iterations"] = report.iterations;
  j["final_cost"] = report.final_cost;
  j["final_step_norm"] = report.final_step_norm;
  j["dropped_constraints"] = report.dropped_constraints;
  j["glr_removed"] = report.glr_removed;

  nlohmann::ordered_json trace = nlohmann::json::array();
  for (const IterationRecord& it : report.trace) {
    trace.push_back({{"iteration", it.iteration},
                     {"cost", it.cost},
                     {"step_norm", it.step_norm},
                     {"accepted", it.accepted}});
  }
  j["trace"] = trace;

  nlohmann::ordered_json flags = nlohmann::json::array();
  for (const GlrFlag& f : report.glr_flags) {
    flags.push_back({{"t_start", f.t_start},
                     {"t_end", f.t_end},
                     {"series", f.fast ? "fast" : "slow"},
                     {"statistic", f.statistic},
                     {"threshold", f.threshold}});
  }
  j["glr_flags"] = flags;

  nlohmann::ordered_json stats;
  for (const auto& [kind, st] : report.kind_stats) {
    stats[kind] = {{"count", st.count},
                   {"rms_whitened", st.rms_whitened},
                   {"mean_weight", st.mean_weight},
                   {"robust_sigma", st.robust_sigma}};
  }
  j["kind_stats"] = stats;
  j["warnings"] = report.warnings;

  std::vector<double> sigma(report.sigma.data(),
                            report.sigma.data() + kNumParams);
  j["sigma"] = sigma;
  dump_json(path, j);
}

void write_metrics_json(const std::string& path, const MetricsReport& report) {
  auto row = [](const MetricValue& v) {
    return nlohmann::ordered_json{{"before", v.before},
                                  {"after", v.after},
                                  {"improvement_pct", v.improvement}};
  };
  nlohmann::ordered_json j;
  j["acceleration_mps2"] = row(report.accel);
  j["angular_rate_dps"] = row(report.gyro_deg);
  j["orientation_deg"] = row(report.orientation_deg);
  j["velocity_10s_mps"] = row(report.velocity_10s);
  j["position_10s_m"] = row(report.position_10s);
  j["integrated_acceleration_mps"] = row(report.integrated_accel);
  dump_json(path, j);
}

void write_curves_csv(const std::string& path, const ErrorCurves& curves) {
  auto out = open_out(path);
  out << "t,vel_before,vel_after,pos_before,pos_after\n";
  for (size_t k = 0; k < curves.t.size(); ++k) {
    const double row[5] = {curves.t[k], curves.vel_before[k],
                           curves.vel_after[k], curves.pos_before[k],
                           curves.pos_after[k]};
    out << fmt_row(row, 5);
  }
}

} // namespace imucal
