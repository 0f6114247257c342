#include "imucal/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "imucal/parallel.hpp"
#include "imucal/stats.hpp"

namespace imucal {

double huber_weight(double r_norm, double sigma, double k) {
  const double band = k * sigma;
  const double r = std::abs(r_norm);
  return r <= band ? 1.0 : band / r;
}

double tukey_weight(double r_norm, double sigma, double c) {
  const double band = c * sigma;
  const double r = std::abs(r_norm);
  if (r >= band) return 0.0;
  const double u = 1.0 - (r / band) * (r / band);
  return u * u;
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Diverged: return "diverged";
  }
  return "unknown";
}

Eigen::Matrix<double, kNumParams, 1> L2Lambda::diagonal() const {
  Eigen::Matrix<double, kNumParams, 1> d;
  d.segment<3>(0).setConstant(b_a);
  d.segment<3>(3).setConstant(gain_a);
  d.segment<3>(6).setConstant(lower_a);
  d.segment<3>(9).setConstant(b_w);
  d.segment<3>(12).setConstant(gain_w);
  d.segment<3>(15).setConstant(lower_w);
  d.segment<3>(18).setConstant(r_w);
  d.segment<9>(21).setConstant(g_w);
  d.segment<9>(30).setConstant(d_m);
  d.segment<3>(39).setConstant(o_m);
  return d;
}

namespace {

constexpr size_t kChunk = 256;

void fill_noise(std::vector<Constraint>& cs, const CalibrationParameters& p,
                const ImuDataset& ds, const CorrectedPath& path,
                const NoiseModel& noise, const ConstraintConfig& ccfg,
                double g_local) {
  for_each_chunk(cs.size(), kChunk, [&](size_t b, size_t e, size_t) {
    for (size_t i = b; i < e; ++i) {
      if (cs[i].noise.size() != 0) continue;
      cs[i].noise = compute_constraint_noise(cs[i], p, ds, path, noise, ccfg, g_local);
      cs[i].sigma = cs[i].noise.diagonal().cwiseSqrt();
    }
  });
}

std::vector<Eigen::MatrixXd> noise_inverses(const std::vector<Constraint>& cs,
                                            std::vector<char>* usable) {
  std::vector<Eigen::MatrixXd> inv(cs.size());
  usable->assign(cs.size(), 1);
  for (size_t i = 0; i < cs.size(); ++i) {
    const Eigen::MatrixXd& M = cs[i].noise;
    if (M.size() == 0 || !M.allFinite() || M.determinant() <= 0.0) {
      (*usable)[i] = 0;
      continue;
    }
    inv[i] = M.inverse();
    inv[i] = (0.5 * (inv[i] + inv[i].transpose())).eval();
    if (!inv[i].allFinite()) (*usable)[i] = 0;
  }
  return inv;
}

std::vector<double> residual_norms(const std::vector<Constraint>& cs,
                                   const std::vector<Eigen::MatrixXd>& inv,
                                   const std::vector<char>& usable,
                                   const CalibrationParameters& p,
                                   const ImuDataset& ds, double g_local) {
  std::vector<double> rn(cs.size(), 0.0);
  const CorrectedPath path(ds, p);
  for_each_chunk(cs.size(), kChunk, [&](size_t b, size_t e, size_t) {
    for (size_t i = b; i < e; ++i) {
      if (!usable[i]) continue;
      const Eigen::VectorXd w = evaluate_constraint(cs[i], path, g_local);
      rn[i] = std::sqrt(std::max(0.0, w.dot(inv[i] * w)));
    }
  });
  return rn;
}

} // namespace

NormalSystem assemble(const std::vector<Constraint>& constraints,
                      const CalibrationParameters& p, const ImuDataset& dataset,
                      const std::vector<double>& weights,
                      const NoiseModel& noise, const ConstraintConfig& ccfg,
                      double g_local, const L2Lambda& lambda,
                      const CalibrationParameters& reference) {
  const size_t n = constraints.size();
  if (weights.size() != n) throw InputError("one weight per constraint required");

  // Constraints arriving without noise blocks get them here, at the current
  // linearization point, without mutating the caller's set.
  std::vector<Constraint> local;
  const std::vector<Constraint>* cs = &constraints;
  const CorrectedPath base(dataset, p);
  if (std::any_of(constraints.begin(), constraints.end(),
                  [](const Constraint& c) { return c.noise.size() == 0; })) {
    local = constraints;
    fill_noise(local, p, dataset, base, noise, ccfg, g_local);
    cs = &local;
  }

  std::vector<char> usable;
  const auto inv = noise_inverses(*cs, &usable);

  // Base residuals.
  std::vector<Eigen::VectorXd> w0(n);
  for_each_chunk(n, kChunk, [&](size_t b, size_t e, size_t) {
    for (size_t i = b; i < e; ++i) w0[i] = evaluate_constraint((*cs)[i], base, g_local);
  });

  // Parameter Jacobians: one corrected path per perturbed parameter, every
  // constraint read back in O(1) from its prefix integrals.
  std::vector<Eigen::MatrixXd> A(n);
  for (size_t i = 0; i < n; ++i) A[i].resize((*cs)[i].dim, kNumParams);
  const ParamVector x0 = pack(p);
  for (int q = 0; q < kNumParams; ++q) {
    const double h = 1e-6 * std::max(std::abs(x0(q)), 1.0);
    ParamVector xp = x0, xm = x0;
    xp(q) += h;
    xm(q) -= h;
    const CorrectedPath pp(dataset, unpack(xp));
    const CorrectedPath pm(dataset, unpack(xm));
    for_each_chunk(n, kChunk, [&](size_t b, size_t e, size_t) {
      for (size_t i = b; i < e; ++i) {
        A[i].col(q) = (evaluate_constraint((*cs)[i], pp, g_local) -
                       evaluate_constraint((*cs)[i], pm, g_local)) /
                      (2.0 * h);
      }
    });
  }

  NormalSystem sys;
  sys.N.setZero();
  sys.rhs.setZero();
  sys.r_norm.assign(n, 0.0);

  const size_t chunks = chunk_count(n, kChunk);
  std::vector<Eigen::Matrix<double, kNumParams, kNumParams>> Np(
      chunks, Eigen::Matrix<double, kNumParams, kNumParams>::Zero());
  std::vector<Eigen::Matrix<double, kNumParams, 1>> rp(
      chunks, Eigen::Matrix<double, kNumParams, 1>::Zero());
  std::vector<double> cp(chunks, 0.0);
  std::vector<size_t> dp(chunks, 0);

  for_each_chunk(n, kChunk, [&](size_t b, size_t e, size_t slot) {
    for (size_t i = b; i < e; ++i) {
      if (!usable[i]) {
        ++dp[slot];
        continue;
      }
      const Eigen::VectorXd mw = inv[i] * w0[i];
      sys.r_norm[i] = std::sqrt(std::max(0.0, w0[i].dot(mw)));
      const double rho = weights[i];
      if (rho <= 0.0) continue;
      Np[slot].noalias() += rho * A[i].transpose() * (inv[i] * A[i]);
      rp[slot].noalias() -= rho * A[i].transpose() * mw;
      cp[slot] += rho * sys.r_norm[i] * sys.r_norm[i];
    }
  });
  for (size_t slot = 0; slot < chunks; ++slot) {
    sys.N += Np[slot];
    sys.rhs += rp[slot];
    sys.cost += cp[slot];
    sys.dropped += dp[slot];
  }
  sys.N = (0.5 * (sys.N + sys.N.transpose())).eval();

  // Quadratic pull toward the reference parameters. Groups the data never
  // excites keep a positive diagonal and a restoring gradient instead of
  // drifting along flat directions of the data term.
  const ParamVector lam = lambda.diagonal();
  const ParamVector dxr = x0 - pack(reference);
  sys.N.diagonal() += lam;
  sys.rhs -= lam.cwiseProduct(dxr);
  sys.cost += dxr.dot(lam.cwiseProduct(dxr));
  return sys;
}

Eigen::Matrix<double, kNumParams, 1> solve_step(
    const Eigen::Matrix<double, kNumParams, kNumParams>& N,
    const Eigen::Matrix<double, kNumParams, 1>& rhs) {
  const Eigen::LDLT<Eigen::Matrix<double, kNumParams, kNumParams>> ldlt(N);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0 ||
      !ldlt.vectorD().allFinite()) {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, kNumParams, kNumParams>>
        es(N, Eigen::EigenvaluesOnly);
    const double smallest = es.info() == Eigen::Success
                                ? es.eigenvalues().minCoeff()
                                : std::numeric_limits<double>::quiet_NaN();
    throw NumericalError("normal system is not positive definite (smallest eigenvalue ~ " +
                         std::to_string(smallest) + ")");
  }
  return ldlt.solve(rhs);
}

std::vector<GlrWindow> glr_scan(const std::vector<Vec3>& residuals,
                                const std::vector<Mat3>& covariances,
                                size_t window, double quantile) {
  if (residuals.size() != covariances.size()) {
    throw InputError("one covariance per residual required");
  }
  const size_t n = residuals.size();
  std::vector<GlrWindow> out;
  if (window == 0 || n < window) return out;

  std::vector<Vec3> prefix(n + 1, Vec3::Zero());
  for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + residuals[i];

  const size_t n_win = n - window + 1;
  std::vector<double> stats(n_win, std::numeric_limits<double>::quiet_NaN());
  for (size_t s = 0; s < n_win; ++s) {
    const Vec3 sum = prefix[s + window] - prefix[s];
    // Consecutive relative residuals chain: interior measurement noise
    // cancels in the window sum, leaving only the two end covariances.
    const Mat3 cov = 0.5 * (covariances[s] + covariances[s + window - 1]);
    const Eigen::LLT<Mat3> llt(cov);
    if (llt.info() != Eigen::Success) continue;
    stats[s] = sum.dot(llt.solve(sum));
  }

  // The propagated covariance is a lower bound: leftover systematic misfit
  // (an imperfect calibration shifts every window together) inflates all the
  // statistics at once. Rescale by the series median so only windows that
  // stand out against their own series get flagged.
  std::vector<double> valid;
  valid.reserve(n_win);
  for (double s : stats) {
    if (std::isfinite(s)) valid.push_back(s);
  }
  double scale = 1.0;
  if (!valid.empty()) {
    std::nth_element(valid.begin(), valid.begin() + valid.size() / 2, valid.end());
    const double med = valid[valid.size() / 2];
    scale = std::max(1.0, med / chi_square_quantile(3.0, 0.5));
  }

  const double thr = chi_square_quantile(3.0, quantile) * scale;
  for (size_t s = 0; s < n_win; ++s) {
    if (std::isfinite(stats[s]) && stats[s] > thr) {
      out.push_back({s, s + window, stats[s], thr});
    }
  }
  return out;
}

namespace {

struct KindLoss {
  double band = std::numeric_limits<double>::infinity();
  bool redescending = false;
};

struct WeightState {
  std::vector<double> weights;
  std::vector<char> glr_disabled;
  std::map<ConstraintKind, KindLoss> loss;
  std::map<std::string, KindStats> stats;
};

// Robust loss matching the IRLS weights: quadratic inside the band, linear
// growth beyond it for the monotone kinds and saturation for the
// redescending kind. Evaluating the true loss (rather than the weighted
// quadratic) is what charges a step for pushing constraints out of the band;
// under the weighted quadratic a zero-weight constraint is free to get
// arbitrarily worse, and the fit can amputate whole sub-populations at no
// cost instead of explaining them.
double robust_cost(const std::vector<Constraint>& cs,
                   const std::vector<double>& rn,
                   const std::vector<char>& usable, const WeightState& st) {
  double cost = 0.0;
  for (size_t i = 0; i < cs.size(); ++i) {
    if (!usable[i] || st.glr_disabled[i]) continue;
    const double r = rn[i];
    const auto it = st.loss.find(cs[i].kind);
    const double b = it == st.loss.end() ? std::numeric_limits<double>::infinity()
                                         : it->second.band;
    if (!(r > b)) {
      if (it != st.loss.end() && it->second.redescending) {
        const double u = 1.0 - (r / b) * (r / b);
        cost += (b * b / 3.0) * (1.0 - u * u * u);
      } else {
        cost += r * r;
      }
    } else {
      cost += it->second.redescending ? b * b / 3.0 : b * (2.0 * r - b);
    }
  }
  return cost;
}

void refresh_weights(const std::vector<Constraint>& cs,
                     const std::vector<double>& rn,
                     const std::vector<char>& usable, const RobustConfig& rb,
                     WeightState* st) {
  std::map<ConstraintKind, std::vector<double>> pops;
  for (size_t i = 0; i < cs.size(); ++i) {
    if (usable[i] && !st->glr_disabled[i]) pops[cs[i].kind].push_back(rn[i]);
  }
  // The whitening already prices the modelled noise, so a consistent fit has
  // unit scale. The MAD estimate may loosen the bands a little while the fit
  // is still rough, but letting it track arbitrarily large scatter would
  // legitimise any misfit (a population that is collectively wrong looks
  // "clean" to a scale-equivariant estimator). The redescending weight is
  // only engaged once its population is roughly consistent; until then the
  // monotone weight keeps a pull toward agreement instead of cutting the
  // disagreeing majority loose.
  std::map<ConstraintKind, double> sigma;
  for (const auto& [kind, pop] : pops) {
    sigma[kind] = pop.size() >= 8 ? mad_sigma(pop) : 1.0;
  }
  st->loss.clear();
  for (const auto& [kind, pop] : pops) {
    const double raw = sigma[kind];
    KindLoss kl;
    const double s = std::clamp(raw, rb.sigma_floor, 2.0);
    if (kind == ConstraintKind::MagRelative && raw <= 2.0) {
      kl.redescending = true;
      kl.band = rb.tukey_c * s;
    } else if (kind != ConstraintKind::ZeroRate) {
      kl.band = rb.huber_k * s;
    }
    st->loss[kind] = kl;
  }
  for (size_t i = 0; i < cs.size(); ++i) {
    if (!usable[i] || st->glr_disabled[i]) {
      st->weights[i] = 0.0;
      continue;
    }
    const auto& kl = st->loss[cs[i].kind];
    switch (cs[i].kind) {
      case ConstraintKind::ZeroRate:
        st->weights[i] = 1.0;
        break;
      case ConstraintKind::MagRelative:
        st->weights[i] = kl.redescending
                             ? tukey_weight(rn[i], kl.band / rb.tukey_c, rb.tukey_c)
                             : huber_weight(rn[i], kl.band / rb.huber_k, rb.huber_k);
        break;
      default:
        st->weights[i] = huber_weight(rn[i], kl.band / rb.huber_k, rb.huber_k);
        break;
    }
  }
  for (const auto& [kind, pop] : pops) {
    st->stats[to_string(kind)].robust_sigma = sigma[kind];
  }
}

} // namespace

CalibrationResult calibrate(const ImuDataset& dataset,
                            const CalibrationConfig& cfg) {
  dataset.validate();
  cfg.noise.validate(true);

  CalibrationResult result;
  EstimationReport& report = result.report;

  const auto statics = detect_static(dataset, cfg.segmentation);
  const auto segments = segment_field(dataset, cfg.segmentation);
  const auto loops = find_loop_closures(dataset, statics, cfg.loops, cfg.g_local);
  result.constraints =
      build_constraints(dataset, statics, segments, loops, cfg.constraints);
  std::vector<Constraint>& cs = result.constraints.constraints;
  if (cs.empty()) throw InputError("no usable constraints in dataset");
  if (!result.constraints.has_statics) {
    report.warnings.push_back(
        "no static intervals found; inertial parameters kept near their "
        "initial values by regularization");
  }

  CalibrationParameters p = cfg.initial;
  if (!p.valid()) throw InputError("initial calibration parameters invalid");

  std::vector<char> usable;
  std::vector<Eigen::MatrixXd> inv;
  std::vector<double> rn;

  WeightState st;
  st.weights.assign(cs.size(), 1.0);
  st.glr_disabled.assign(cs.size(), 0);

  NormalSystem last_sys;
  double best_cost = std::numeric_limits<double>::infinity();
  CalibrationParameters best_p = p;

  const ParamVector lam = cfg.robust.l2_lambda.diagonal();
  const ParamVector x_init = pack(cfg.initial);
  auto prior_cost = [&](const CalibrationParameters& q) {
    const ParamVector d = pack(q) - x_init;
    return d.dot(lam.cwiseProduct(d));
  };

  // Observation-noise blocks follow the linearization point. Scaling the
  // corrections rescales both the residuals and their propagated noise, so
  // whitened residuals cannot be shrunk by collapsing the corrected signals.
  auto relinearize_noise = [&]() {
    for (auto& c : cs) c.noise.resize(0, 0);
    const CorrectedPath path(dataset, p);
    fill_noise(cs, p, dataset, path, cfg.noise, cfg.constraints, cfg.g_local);
    inv = noise_inverses(cs, &usable);
    rn = residual_norms(cs, inv, usable, p, dataset, cfg.g_local);
  };

  auto run_irls = [&]() -> SolveStatus {
    int strikes = 0;
    // Marquardt damping, scaled by the diagonal so the very different
    // stiffness of the parameter groups does not need hand-tuned trust radii.
    double mu = 1e-3;
    double nu = 2.0;

    // One Marquardt step against the frozen noise model and weights. Returns
    // false when no damping level yields a cost decrease. Steps longer than
    // step_cap are treated like rejections so more damping shortens them:
    // the frozen whitening is only trustworthy near the point it was built
    // at, and far outside it the direction-type residuals reward degenerate
    // parameter collapses that the refreshed model immediately repriced.
    auto lm_step = [&](double inner_tol, double step_cap, bool* at_minimum) -> bool {
      ++report.iterations;
      const double cost_before = robust_cost(cs, rn, usable, st) + prior_cost(p);
      last_sys = assemble(cs, p, dataset, st.weights, cfg.noise,
                          cfg.constraints, cfg.g_local, cfg.robust.l2_lambda,
                          cfg.initial);
      bool accepted = false;
      for (int tries = 0; tries <= 16; ++tries) {
        Eigen::Matrix<double, kNumParams, kNumParams> damped = last_sys.N;
        damped.diagonal() += mu * last_sys.N.diagonal();
        const auto dx = solve_step(damped, last_sys.rhs);
        if (dx.norm() < inner_tol) {
          report.final_cost = cost_before;
          report.final_step_norm = dx.norm();
          report.trace.push_back({report.iterations, cost_before, dx.norm(), true});
          if (cost_before < best_cost) {
            best_cost = cost_before;
            best_p = p;
          }
          *at_minimum = true;
          return true;
        }
        if (dx.norm() > step_cap) {
          mu *= nu;
          nu *= 2.0;
          continue;
        }
        const CalibrationParameters p_try = unpack(pack(p) + dx);
        double cost_try = std::numeric_limits<double>::infinity();
        std::vector<double> rn_try;
        if (p_try.valid()) {
          rn_try = residual_norms(cs, inv, usable, p_try, dataset, cfg.g_local);
          cost_try = robust_cost(cs, rn_try, usable, st) + prior_cost(p_try);
        }
        const double predicted =
            0.5 * dx.dot(mu * last_sys.N.diagonal().cwiseProduct(dx) + last_sys.rhs);
        const double rho = (cost_before - cost_try) / std::max(predicted, 1e-300);
        if (std::isfinite(cost_try) && rho > 0.0) {
          p = p_try;
          rn = std::move(rn_try);
          report.final_cost = cost_try;
          report.final_step_norm = dx.norm();
          const double shrink = 1.0 - std::pow(2.0 * rho - 1.0, 3);
          mu *= std::max(1.0 / 3.0, shrink);
          nu = 2.0;
          accepted = true;
          break;
        }
        mu *= nu;
        nu *= 2.0;
      }
      report.trace.push_back({report.iterations,
                              accepted ? report.final_cost : cost_before,
                              accepted ? report.final_step_norm : 0.0,
                              accepted});
      if (accepted) {
        strikes = 0;
        if (report.final_cost < best_cost) {
          best_cost = report.final_cost;
          best_p = p;
        }
        if (report.final_step_norm < inner_tol) *at_minimum = true;
      } else {
        ++strikes;
      }
      return accepted || strikes < 3;
    };

    // Outer fixed point: solve the frozen problem, then re-linearize the
    // noise model and refresh the robust weights at the new estimate. Acting
    // only between inner solves keeps the moving model from steering the
    // step-size control, and capping the travel per round keeps the estimate
    // inside the region where the frozen whitening is honest. Once an entire
    // refresh round barely moves the estimate, the model is held fixed and
    // the last solve polishes down to the final tolerance.
    const double round_cap = 0.5;
    bool frozen = false;
    int budget = 150;
    for (int outer = 0; outer < cfg.estimator.max_iterations; ++outer) {
      if (!frozen) {
        relinearize_noise();
        if (cfg.robust.enabled) {
          refresh_weights(cs, rn, usable, cfg.robust, &st);
        } else {
          for (size_t i = 0; i < cs.size(); ++i) {
            st.weights[i] = st.glr_disabled[i] ? 0.0 : 1.0;
          }
        }
      }
      const ParamVector x_start = pack(p);
      const double inner_tol = frozen ? cfg.estimator.tolerance : 1e-4;
      bool at_minimum = false;
      for (int inner = 0; inner < 25 && !at_minimum; ++inner) {
        if (--budget < 0) return SolveStatus::MaxIterations;
        if (!lm_step(inner_tol, round_cap, &at_minimum)) return SolveStatus::Diverged;
        if ((pack(p) - x_start).norm() > round_cap) break;
      }
      if (frozen) {
        return at_minimum ? SolveStatus::Converged : SolveStatus::MaxIterations;
      }
      if ((pack(p) - x_start).norm() < 1e-3) frozen = true;
    }
    return SolveStatus::MaxIterations;
  };

  report.status = run_irls();

  if (cfg.robust.glr_enabled && report.status != SolveStatus::Diverged) {
    relinearize_noise();
    const CorrectedPath path(dataset, p);
    std::vector<GlrFlag> flags;
    for (const bool fast : {true, false}) {
      std::vector<size_t> series;
      for (size_t i = 0; i < cs.size(); ++i) {
        if (cs[i].kind == ConstraintKind::MagRelative && cs[i].fast == fast &&
            usable[i] && !st.glr_disabled[i]) {
          series.push_back(i);
        }
      }
      std::sort(series.begin(), series.end(), [&](size_t a, size_t b) {
        return cs[a].t_start < cs[b].t_start;
      });
      std::vector<Vec3> res(series.size());
      std::vector<Mat3> covs(series.size());
      for (size_t k = 0; k < series.size(); ++k) {
        res[k] = evaluate_constraint(cs[series[k]], path, cfg.g_local);
        covs[k] = cs[series[k]].noise;
      }
      const size_t window = fast ? cfg.robust.glr_window : cfg.robust.glr_window_slow;
      for (const GlrWindow& w :
           glr_scan(res, covs, window, cfg.robust.glr_quantile)) {
        flags.push_back({cs[series[w.begin]].t_start, cs[series[w.end - 1]].t_end,
                         fast, w.statistic, w.threshold});
      }
    }
    report.glr_flags = flags;
    size_t removed = 0;
    for (size_t i = 0; i < cs.size(); ++i) {
      if (cs[i].kind != ConstraintKind::MagRelative || st.glr_disabled[i]) continue;
      for (const GlrFlag& f : flags) {
        if (cs[i].t_end >= f.t_start && cs[i].t_start <= f.t_end) {
          st.glr_disabled[i] = 1;
          ++removed;
          break;
        }
      }
    }
    report.glr_removed = removed;
    if (removed > 0) {
      report.warnings.push_back("disturbance scan removed " +
                                std::to_string(removed) +
                                " field constraints; estimate refreshed");
      const SolveStatus second = run_irls();
      report.status = second;
    }
  }

  if (report.status == SolveStatus::Diverged) {
    p = best_p;
    report.warnings.push_back("optimization diverged; reporting best parameters seen");
  }

  // Reported residual statistics are evaluated at the parameters returned.
  relinearize_noise();

  report.dropped_constraints = last_sys.dropped;
  std::map<std::string, double> sum_sq, sum_w;
  std::map<std::string, size_t> counts;
  for (size_t i = 0; i < cs.size(); ++i) {
    if (!usable[i] || st.glr_disabled[i]) continue;
    const std::string key = to_string(cs[i].kind);
    counts[key] += 1;
    sum_sq[key] += rn[i] * rn[i];
    sum_w[key] += st.weights[i];
  }
  for (const auto& [key, count] : counts) {
    KindStats ks;
    ks.count = count;
    ks.rms_whitened = std::sqrt(sum_sq[key] / static_cast<double>(count));
    ks.mean_weight = sum_w[key] / static_cast<double>(count);
    const auto it = st.stats.find(key);
    if (it != st.stats.end()) ks.robust_sigma = it->second.robust_sigma;
    report.kind_stats[key] = ks;
  }

  {
    const Eigen::LDLT<Eigen::Matrix<double, kNumParams, kNumParams>> ldlt(last_sys.N);
    if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
      const Eigen::Matrix<double, kNumParams, kNumParams> cov =
          ldlt.solve(Eigen::Matrix<double, kNumParams, kNumParams>::Identity());
      report.sigma = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    } else {
      report.sigma.setZero();
    }
  }

  result.params = p;
  return result;
}

} // namespace imucal
