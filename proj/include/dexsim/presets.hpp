#pragma once

// Built-in experiments reproducing the figures: sequence construction,
// simulation, detection, correlation and fitting. Shared by the CLI and the
// acceptance checks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dexsim/fit.hpp"
#include "dexsim/lindblad.hpp"
#include "dexsim/photonics.hpp"
#include "dexsim/saturation.hpp"
#include "dexsim/seqlang.hpp"
#include "dexsim/trajectory.hpp"

namespace dexsim {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

struct PresetConfig {
  int trajectories = 0;  // 0: preset default
  std::uint64_t seed = 1;
  double tol = 1e-8;
  int threads = 0;
  SystemParams params = default_params();
  double efficiency = 1.0;  // detector efficiency used by the presets
};

inline int traj_or(const PresetConfig& c, int def) { return c.trajectories > 0 ? c.trajectories : def; }

inline json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

inline json params_json(const SystemParams& p) {
  return {{"tau_de", number_json(p.tau_de)},         {"tau_be", number_json(p.tau_be)},
          {"t_larmor_de", number_json(p.t_larmor_de)}, {"delta_de", number_json(p.delta_de())},
          {"tau_xx_ss", number_json(p.tau_xx_ss)},   {"tau_xx_sp", number_json(p.tau_xx_sp)},
          {"tau_hh", number_json(p.tau_hh)},         {"t_larmor_xx", number_json(p.t_larmor_xx)},
          {"t2_star", number_json(p.t2_star)},       {"irf_fwhm", number_json(p.irf_fwhm)},
          {"efficiency", number_json(p.efficiency)}, {"h_planck", number_json(p.h_planck)}};
}

inline json fit_json(const FitResult& f, const ModelSpec& m) {
  json j;
  j["model"] = f.model;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["chi2"] = number_json(f.chi2);
  json params = json::object(), errs = json::object();
  for (int i = 0; i < m.arity; ++i) {
    params[m.param_names[i]] = number_json(f.params(i));
    errs[m.param_names[i]] = number_json(f.stderr_of(i));
  }
  j["params"] = params;
  j["stderr"] = errs;
  json cov = json::array();
  for (int i = 0; i < f.covariance.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < f.covariance.cols(); ++k) row.push_back(number_json(f.covariance(i, k)));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  return j;
}

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// First local maximum of f on [t0, t0 + span] (fine scan plus golden refinement).
inline double first_maximum(const std::function<double(double)>& f, double t0, double span, double step) {
  // Interior maxima only: a curve already falling at t0 has its first maximum later.
  double prev = f(t0), cur = f(t0 + step);
  for (double t = t0 + step; t + step <= t0 + span; t += step) {
    const double next = f(t + step);
    if (cur >= prev && cur >= next) {
      double a = t - step, b = t + step;
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int i = 0; i < 60; ++i) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (f(c) > f(d)) b = d;
        else a = c;
      }
      return 0.5 * (a + b);
    }
    prev = cur;
    cur = next;
  }
  return t0 + span;
}

inline double wrap(double x, double period) {
  double r = std::fmod(x, period);
  return r < 0.0 ? r + period : r;
}

// ===========================================================================
// fig-saturation

struct SaturationPreset {
  SaturationCurves curves;
  double capture_coeff = 1.0;
  double de_argmax_power = 0.0;
  double de_half_power = 0.0;
  double be_half_power = 0.0;
  double power_ratio = 0.0;     // de_half_power / be_half_power
  double expected_ratio = 0.0;  // tau_be / tau_de
  double intensity_ratio = 0.0; // peak DE / BE plateau
};

inline SaturationPreset run_fig_saturation(const PresetConfig& cfg) {
  SaturationPreset r;
  r.curves = saturation_curves(log_grid(1e-7, 1e4, 2201), cfg.params, r.capture_coeff);
  const auto& c = r.curves;
  r.de_argmax_power = c.power[argmax_of(c.intensity_de)];
  r.de_half_power = rising_half_point(c.power, c.intensity_de);
  r.be_half_power = rising_half_point(c.power, c.intensity_be);
  r.power_ratio = r.de_half_power / r.be_half_power;
  r.expected_ratio = cfg.params.tau_be / cfg.params.tau_de;
  r.intensity_ratio = c.intensity_de[argmax_of(c.intensity_de)] / c.intensity_be[argmax_of(c.intensity_be)];
  return r;
}

inline std::string saturation_csv(const SaturationPreset& r) {
  std::ostringstream os;
  os << "power,generation_per_ns,occ_vac,occ_be,occ_de,intensity_be,intensity_de\n";
  const auto& c = r.curves;
  for (std::size_t i = 0; i < c.power.size(); ++i)
    os << fmt_num(c.power[i]) << ',' << fmt_num(c.generation[i]) << ',' << fmt_num(c.occ_vac[i]) << ','
       << fmt_num(c.occ_be[i]) << ',' << fmt_num(c.occ_de[i]) << ',' << fmt_num(c.intensity_be[i]) << ','
       << fmt_num(c.intensity_de[i]) << '\n';
  return os.str();
}

// ===========================================================================
// fig-rabi

struct RabiPreset {
  std::vector<double> theta;
  std::vector<double> emission;  // hard reset between repetitions
  double theta_max1 = 0.0, theta_min1 = 0.0;
  FitResult fit;
  std::vector<double> carry_rep_period;  // 0: reset
  std::vector<double> carry_fraction;    // exp(-rep_period / tau_de), 0 for reset
  std::vector<double> carry_theta;
  std::vector<std::vector<double>> carry_emission;
  std::vector<double> contrast;  // (I(pi) - I(2pi)) / (I(pi) + I(2pi))
  PulseSequence sequence;
};

inline PulseSequence rabi_sequence(double theta, double rep_period) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), theta));
  s.pulses.push_back(make_square_pulse("probe", 61.0, 0.02, Transition::kDeXx, Jones::sigma_plus(), kPi));
  s.t_end = 70.0;
  s.rep_period = rep_period;
  return s;
}

/// Integrated XX emission in the window 60-70 ns of the last repetition.
inline double rabi_xx_emission(double theta, const SystemParams& params, double rep_period, int n_reps, double tol) {
  const PulseSequence seq = rabi_sequence(theta, rep_period);
  LindbladOptions o;
  o.tol = tol;
  o.method = LindbladMethod::kHybrid;
  o.sample_dt = 0.0;
  QuantumState s = QuantumState::basis(BasisState::kVac);
  const double offset = rep_period > 0.0 ? (n_reps - 1) * rep_period : 0.0;
  s = evolve_lindblad(s, seq, params, offset + 60.0, o).state;
  o.sample_dt = 0.005;
  const auto tr = evolve_lindblad(s, seq, params, offset + 70.0, o).trace;
  double total = 0.0;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    double a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < tr.emission_names.size(); ++c)
      if (tr.emission_names[c].rfind("xx_", 0) == 0) a += tr.emission[k - 1][c], b += tr.emission[k][c];
    total += 0.5 * (a + b) * (tr.t[k] - tr.t[k - 1]);
  }
  return total;
}

inline RabiPreset run_fig_rabi(const PresetConfig& cfg) {
  RabiPreset r;
  r.sequence = rabi_sequence(kPi, 0.0);
  const int n = 160;
  for (int i = 0; i <= n; ++i) {
    const double th = 4.0 * kPi * i / n;
    r.theta.push_back(th);
    r.emission.push_back(rabi_xx_emission(th, cfg.params, 0.0, 1, cfg.tol));
  }
  auto refine = [&](std::size_t i, bool maximum) {
    const double y0 = r.emission[i - 1], y1 = r.emission[i], y2 = r.emission[i + 1];
    const double den = y0 - 2.0 * y1 + y2;
    const double h = r.theta[1] - r.theta[0];
    (void)maximum;
    return den != 0.0 ? r.theta[i] + 0.5 * h * (y0 - y2) / den : r.theta[i];
  };
  std::size_t imax = 0, imin = 0;
  for (std::size_t i = 1; i + 1 < r.theta.size(); ++i)
    if (r.emission[i] >= r.emission[i - 1] && r.emission[i] > r.emission[i + 1]) {
      imax = i;
      break;
    }
  for (std::size_t i = imax + 1; i + 1 < r.theta.size(); ++i)
    if (r.emission[i] <= r.emission[i - 1] && r.emission[i] < r.emission[i + 1]) {
      imin = i;
      break;
    }
  r.theta_max1 = imax ? refine(imax, true) : 0.0;
  r.theta_min1 = imin ? refine(imin, false) : 0.0;

  // Rabi model against power P = (Theta/pi)^2 in units of the pi-pulse power.
  std::vector<DataPoint> d;
  const double ymax = *std::max_element(r.emission.begin(), r.emission.end());
  for (std::size_t i = 0; i < r.theta.size(); ++i)
    d.push_back({std::pow(r.theta[i] / kPi, 2.0), r.emission[i], 0.01 * ymax});
  VecX init(3);
  init << ymax, 1.0, 30.0;
  r.fit = lm_fit(rabi_curve_model(), d, init);

  r.carry_rep_period = {0.0, 4000.0, 2000.0, 1000.0, 500.0};
  for (int i = 0; i <= 16; ++i) r.carry_theta.push_back(4.0 * kPi * i / 16);
  for (double rp : r.carry_rep_period) {
    r.carry_fraction.push_back(rp > 0.0 ? std::exp(-rp / cfg.params.tau_de) : 0.0);
    std::vector<double> e;
    for (double th : r.carry_theta) e.push_back(rabi_xx_emission(th, cfg.params, rp, rp > 0.0 ? 6 : 1, cfg.tol));
    const double i_pi = e[4], i_2pi = e[8];
    r.contrast.push_back((i_pi - i_2pi) / (i_pi + i_2pi));
    r.carry_emission.push_back(std::move(e));
  }
  return r;
}

inline std::string rabi_csv(const RabiPreset& r) {
  std::ostringstream os;
  os << "theta_rad,xx_emission";
  for (double rp : r.carry_rep_period) os << ",xx_emission_rep" << (rp > 0.0 ? fmt_num(rp) + "ns" : "reset");
  os << '\n';
  for (std::size_t i = 0; i < r.theta.size(); ++i) {
    os << fmt_num(r.theta[i]) << ',' << fmt_num(r.emission[i]);
    // Carryover curves live on a coarser grid (every 10th point).
    for (std::size_t c = 0; c < r.carry_rep_period.size(); ++c)
      os << ',' << (i % 10 == 0 ? fmt_num(r.carry_emission[c][i / 10]) : "");
    os << '\n';
  }
  return os.str();
}

// ===========================================================================
// fig-lifetime

struct LifetimePreset {
  std::vector<double> delays;
  std::vector<long long> counts;
  int trajectories = 0;
  FitResult fit;
  double tau = 0.0, tau_err = 0.0;
  PulseSequence sequence;
};

inline PulseSequence lifetime_sequence(double delay) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
  s.pulses.push_back(make_square_pulse("probe", 60.0 + delay, 0.02, Transition::kDeXx, Jones::sigma_plus(), kPi));
  s.t_end = 60.0 + delay + 10.0;
  return s;
}

inline LifetimePreset run_fig_lifetime(const PresetConfig& cfg,
                                       std::vector<double> delays = {10, 50, 150, 400, 1000, 1500, 2200, 3500}) {
  LifetimePreset r;
  r.delays = delays;
  r.trajectories = traj_or(cfg, 20000);
  r.sequence = lifetime_sequence(delays.front());
  for (std::size_t j = 0; j < delays.size(); ++j) {
    const PulseSequence seq = lifetime_sequence(delays[j]);
    const auto ens = run_ensemble(seq, cfg.params, r.trajectories, derive_seed(cfg.seed, j), {}, cfg.threads);
    DetectorModel det{0.0, cfg.efficiency, derive_seed(cfg.seed, 100 + j)};
    const auto det_stream = apply_detector(ens.stream, det);
    long long c = 0;
    std::int64_t last = -1;
    for (const auto& rec : det_stream.records)
      if (rec.line != EmissionLine::kDe1283 && rec.t >= 60.0 + delays[j] && rec.traj_id != last) {
        ++c;
        last = rec.traj_id;
      }
    r.counts.push_back(c);
  }
  std::vector<DataPoint> d;
  for (std::size_t j = 0; j < delays.size(); ++j)
    d.push_back({delays[j], double(r.counts[j]), std::sqrt(std::max<double>(1.0, r.counts[j]))});
  VecX init(2);
  init << std::max<double>(1.0, r.counts.front()), 1000.0;
  r.fit = lm_fit(exp_decay_model(), d, init);
  r.tau = r.fit.params(1);
  r.tau_err = r.fit.stderr_of(1);
  return r;
}

inline std::string lifetime_csv(const LifetimePreset& r) {
  std::ostringstream os;
  os << "delay_ns,counts,counts_err,trajectories,fit\n";
  const auto m = exp_decay_model();
  for (std::size_t j = 0; j < r.delays.size(); ++j)
    os << fmt_num(r.delays[j]) << ',' << r.counts[j] << ',' << fmt_num(std::sqrt(double(r.counts[j]))) << ','
       << r.trajectories << ',' << fmt_num(m.eval(r.fit.params, r.delays[j])) << '\n';
  return os.str();
}

// ===========================================================================
// fig-coherence-cw

struct CoherenceCwPreset {
  CorrelationResult g2;
  FitResult fit;
  double period = 0.0, period_err = 0.0, t_pd = 0.0, p0 = 0.0;
  double peak_dcp = 0.0;
  long long pairs = 0;
  int trajectories = 0;
  double probe_rabi = 0.0;
  PulseSequence sequence;
};

inline PulseSequence coherence_cw_sequence(double rabi, double length) {
  PulseSequence s;
  s.pulses.push_back(make_cw_pulse("probe", 0.0, length, Transition::kDeXx, Jones::horizontal(), rabi));
  s.t_end = length;
  return s;
}

/// Fit a decaying sinusoid to a dcp series, starting from the best of four phases.
inline FitResult fit_dcp(const std::vector<DataPoint>& d, double t_guess, double tpd_guess) {
  const auto m = decaying_sinusoid_model();
  FitResult best;
  bool have = false;
  for (int k = 0; k < 4; ++k) {
    VecX init(4);
    init << 0.3, t_guess, k * kPi / 2.0, tpd_guess;
    try {
      FitResult f = lm_fit(m, d, init);
      // A flat envelope can drift through infinity to large negative T_PD.
      const bool flat = f.params(3) < -1e4;
      if (flat) f.params(3) = -f.params(3);
      if ((f.params(3) > 0.0) && (!have || f.chi2 < best.chi2)) {
        best = f;
        have = true;
      }
    } catch (const FitError&) {
    }
  }
  if (!have) throw FitError("decaying sinusoid fit failed for all starting phases");
  if (best.params(0) < 0.0) {
    best.params(0) = -best.params(0);
    best.params(2) += kPi;
  }
  best.params(2) = wrap(best.params(2), 2.0 * kPi);
  return best;
}

inline CoherenceCwPreset run_fig_coherence_cw(const PresetConfig& cfg, double rabi = 0.46, double length = 300.0) {
  CoherenceCwPreset r;
  r.trajectories = traj_or(cfg, 4000);
  r.probe_rabi = rabi;
  r.sequence = coherence_cw_sequence(rabi, length);
  TrajectoryOptions o;
  o.initial_state = ket_a();
  const auto ens = run_ensemble(r.sequence, cfg.params, r.trajectories, cfg.seed, o, cfg.threads);
  DetectorModel det{cfg.params.irf_fwhm, cfg.efficiency, derive_seed(cfg.seed, 1)};
  const auto s = polarization_project(apply_detector(ens.stream.filter_line(EmissionLine::kXxSs1278), det),
                                      AnalyzerBasis::kCircular, derive_seed(cfg.seed, 2));
  r.g2 = g2_circular(s, {0.2, 30.0, false});
  std::vector<DataPoint> d;
  for (std::size_t i = 0; i < r.g2.size(); ++i) {
    r.pairs += r.g2.co_counts[i] + r.g2.cross_counts[i];
    if (r.g2.co_counts[i] + r.g2.cross_counts[i] > 0) d.push_back({r.g2.bin_center(i), r.g2.dcp[i], r.g2.dcp_err[i]});
  }
  for (double x : r.g2.dcp) r.peak_dcp = std::max(r.peak_dcp, std::abs(x));
  r.fit = fit_dcp(d, cfg.params.t_larmor_de, 25.0);
  r.p0 = r.fit.params(0);
  r.period = r.fit.params(1);
  r.period_err = r.fit.stderr_of(1);
  r.t_pd = r.fit.params(3);
  return r;
}

inline std::string coherence_cw_csv(const CoherenceCwPreset& r) {
  std::ostringstream os;
  write_correlation_csv(os, r.g2);
  return os.str();
}

// ===========================================================================
// fig-coherence-pulsed

struct CoherencePulsedPreset {
  PulsedBars bars;
  FitResult fit;
  double rep_period = 0.0;
  double t_pd = 0.0, t_pd_err = 0.0, alias_period = 0.0;
  std::vector<int> maxima;  // local maxima of the fitted per-pulse dcp
  std::vector<int> expected_maxima;
  bool pattern_ok = false;
  int trajectories = 0;
  int repetitions = 0;
  double probe_area = 0.0;
  PulseSequence sequence;
};

inline PulseSequence coherence_pulsed_sequence(double area, double rep_rate_mhz) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("probe", 0.0, 0.02, Transition::kDeXx, Jones::horizontal(), area));
  s.rep_period = 1000.0 / rep_rate_mhz;
  s.t_end = 0.02;
  return s;
}

inline CoherencePulsedPreset run_fig_coherence_pulsed(const PresetConfig& cfg, double area = 0.4,
                                                      int repetitions = 40) {
  CoherencePulsedPreset r;
  r.trajectories = traj_or(cfg, 100000);
  r.repetitions = repetitions;
  r.probe_area = area;
  r.sequence = coherence_pulsed_sequence(area, 76.0);
  r.rep_period = r.sequence.rep_period;
  TrajectoryOptions o;
  o.initial_state = ket_a();
  o.n_repetitions = repetitions;
  const auto ens = run_ensemble(r.sequence, cfg.params, r.trajectories, cfg.seed, o, cfg.threads);
  DetectorModel det{cfg.params.irf_fwhm, cfg.efficiency, derive_seed(cfg.seed, 1)};
  const auto s = polarization_project(apply_detector(ens.stream.filter_line(EmissionLine::kXxSs1278), det),
                                      AnalyzerBasis::kCircular, derive_seed(cfg.seed, 2));
  const int max_k = repetitions - 1;
  r.bars = pulsed_coincidence_bars(s, r.rep_period, max_k);

  std::vector<DataPoint> d;
  for (int k = 1; k <= max_k; ++k)
    if (r.bars.co[k] + r.bars.cross[k] > 0) d.push_back({k * r.rep_period, r.bars.dcp[k], r.bars.dcp_err[k]});
  // Sampling the 3.09 ns precession every rep_period aliases it to a slow beat.
  const double f = 1.0 / cfg.params.t_larmor_de, fs = 1.0 / r.rep_period;
  const double fa = std::abs(f - std::round(f / fs) * fs);
  r.alias_period = 1.0 / fa;
  r.fit = fit_dcp(d, r.alias_period, 100.0);
  r.t_pd = r.fit.params(3);
  r.t_pd_err = r.fit.stderr_of(3);

  const auto m = decaying_sinusoid_model();
  auto at = [&](int k) { return m.eval(r.fit.params, k * r.rep_period); };
  int k_end = max_k;
  for (int k = 0; k <= max_k; ++k)
    if (k * r.rep_period > 2.0 * r.t_pd) {
      k_end = k;
      break;
    }
  for (int k = 0; k <= k_end; ++k) {
    const bool left = k == 0 || at(k) > at(k - 1);
    const bool right = k == k_end || at(k) >= at(k + 1);
    if (left && right && at(k) > 0.0) r.maxima.push_back(k);
  }
  for (int k = 0; k <= k_end; k += 3) r.expected_maxima.push_back(k);
  r.pattern_ok = r.maxima == r.expected_maxima;
  return r;
}

inline std::string coherence_pulsed_csv(const CoherencePulsedPreset& r) {
  std::ostringstream os;
  os << "pulse_index,delay_ns,co,cross,dcp,dcp_err,fit\n";
  const auto m = decaying_sinusoid_model();
  for (std::size_t k = 0; k < r.bars.co.size(); ++k)
    os << k << ',' << fmt_num(k * r.rep_period) << ',' << r.bars.co[k] << ',' << r.bars.cross[k] << ','
       << fmt_num(r.bars.dcp[k]) << ',' << fmt_num(r.bars.dcp_err[k]) << ','
       << fmt_num(m.eval(r.fit.params, k * r.rep_period)) << '\n';
  return os.str();
}

// ===========================================================================
// fig-control

struct ControlRun {
  std::string label;
  double delta_over_sigma = 0.0;
  std::vector<double> t;  // bin centres after the control pulse
  std::vector<long long> n_plus, n_minus;
  std::vector<double> dcp, dcp_err;
  FitResult fit_free;
  double p0_signed = 0.0, p0_err = 0.0;
  double t_first_max = 0.0;  // of the free fit
  double t_spin_max = 0.0;   // corrected by the reference lag, modulo T
  long long clicks = 0;
};

struct ControlPreset {
  double t_control = 62.0;
  double sigma = 100.0;
  double probe_rabi = 0.0;
  double probe_delay = 0.2;
  int trajectories = 0;
  ControlRun reference;
  std::vector<ControlRun> runs;  // sigma+ control, one per detuning
  ControlRun h_control;
  double period = 0.0;
  double t_ref = 0.0;
  std::vector<double> x, p0_norm, expected;
  double rms = 0.0;
  FitResult detuning_fit;
  PulseSequence sequence;  // Delta/sigma = 0.7
};

inline PulseSequence control_sequence(std::optional<Pulse> control, double t_c, double probe_rabi,
                                      double probe_delay, double probe_len) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
  if (control) s.pulses.push_back(*control);
  s.pulses.push_back(
      make_cw_pulse("probe", t_c + probe_delay, probe_len, Transition::kDeXx, Jones::horizontal(), probe_rabi));
  s.t_end = t_c + probe_delay + probe_len;
  return s;
}

inline ControlRun control_run(const std::string& label, const PulseSequence& seq, const PresetConfig& cfg,
                              const TrajectoryOptions& o, int n, std::uint64_t seed, double t_c, double t_sel,
                              double bin, double span) {
  ControlRun r;
  r.label = label;
  const auto ens = run_ensemble(seq, cfg.params, n, seed, o, cfg.threads);
  // First XX_SS click after the probe is switched on, per trajectory.
  ClickStream first;
  first.t_total = ens.stream.t_total;
  std::int64_t last = -1;
  for (const auto& rec : ens.stream.records)
    if (rec.line == EmissionLine::kXxSs1278 && rec.t >= t_sel && rec.traj_id != last) {
      first.records.push_back(rec);
      last = rec.traj_id;
    }
  DetectorModel det{cfg.params.irf_fwhm, cfg.efficiency, derive_seed(seed, 1)};
  const auto s = polarization_project(apply_detector(first, det), AnalyzerBasis::kCircular, derive_seed(seed, 2));
  const auto nb = static_cast<std::size_t>(std::round(span / bin));
  r.n_plus.assign(nb, 0);
  r.n_minus.assign(nb, 0);
  for (std::size_t i = 0; i < nb; ++i) r.t.push_back((i + 0.5) * bin);
  for (const auto& rec : s.records) {
    const double dt = rec.t - t_c;
    if (dt < 0.0 || dt >= span) continue;
    const auto i = static_cast<std::size_t>(dt / bin);
    (rec.outcome == 0 ? r.n_plus : r.n_minus)[i]++;
    ++r.clicks;
  }
  fill_dcp(r.n_plus, r.n_minus, r.dcp, r.dcp_err);
  return r;
}

inline std::vector<DataPoint> control_data(const ControlRun& r) {
  std::vector<DataPoint> d;
  for (std::size_t i = 0; i < r.t.size(); ++i)
    if (r.n_plus[i] + r.n_minus[i] > 0) d.push_back({r.t[i], r.dcp[i], r.dcp_err[i]});
  return d;
}

inline ControlPreset run_fig_control(const PresetConfig& cfg, std::vector<double> detunings = {-2, -1, -0.7, 0, 0.7,
                                                                                               1, 2},
                                     double probe_rabi = 0.6) {
  ControlPreset out;
  out.trajectories = traj_or(cfg, 30000);
  out.probe_rabi = probe_rabi;
  const double t_c = out.t_control, len = 35.0, bin = 0.1, span = 30.0;
  const double t_sel = t_c + out.probe_delay;
  const auto m = decaying_sinusoid_model();

  // Reference: DE prepared in |+2> at the control time, same probe and detector.
  {
    TrajectoryOptions o;
    o.initial_state = basis_ket(BasisState::kDeP2);
    o.t_start = t_c;
    const auto seq = control_sequence(std::nullopt, t_c, probe_rabi, out.probe_delay, len);
    out.reference = control_run("reference", seq, cfg, o, out.trajectories, derive_seed(cfg.seed, 0), t_c, t_sel,
                                bin, span);
    out.reference.fit_free = fit_dcp(control_data(out.reference), cfg.params.t_larmor_de, 50.0);
    out.period = out.reference.fit_free.params(1);
    const VecX pr = out.reference.fit_free.params;
    out.t_ref = first_maximum([&](double t) { return m.eval(pr, t); }, 0.0, 2.0 * out.period, 0.005);
    out.reference.t_first_max = out.t_ref;
    out.reference.p0_signed = pr(0);
    out.reference.p0_err = out.reference.fit_free.stderr_of(0);
  }
  const VecX pr = out.reference.fit_free.params;

  auto analyse = [&](ControlRun& r) {
    // Signed amplitude of the reference waveform delayed by a quarter period.
    double num = 0.0, den = 0.0;
    for (const auto& p : control_data(r)) {
      VecX q = pr;
      q(0) = 1.0;
      q(2) = pr(2) - kPi / 2.0;
      const double f = m.eval(q, p.t);
      num += f * p.y / (p.sigma * p.sigma);
      den += f * f / (p.sigma * p.sigma);
    }
    r.p0_signed = num / den;
    r.p0_err = 1.0 / std::sqrt(den);
    try {
      r.fit_free = fit_dcp(control_data(r), out.period, pr(3));
      const VecX pf = r.fit_free.params;
      r.t_first_max = first_maximum([&](double t) { return m.eval(pf, t); }, 0.0, 2.0 * out.period, 0.005);
      r.t_spin_max = wrap(r.t_first_max - out.t_ref, out.period);
    } catch (const FitError&) {
      r.t_first_max = r.t_spin_max = std::nan("");
    }
  };

  TrajectoryOptions o;
  for (std::size_t j = 0; j < detunings.size(); ++j) {
    const double x = detunings[j];
    const Pulse c = make_shaped_pulse("control", PulseShape::kSech, t_c, Transition::kDeXx, Jones::sigma_plus(),
                                      2.0 * kPi, x * out.sigma, out.sigma);
    const auto seq = control_sequence(c, t_c, probe_rabi, out.probe_delay, len);
    if (std::abs(x - 0.7) < 1e-12) out.sequence = seq;
    char label[64];
    std::snprintf(label, sizeof label, "sigma+ %+.2f", x);
    ControlRun r = control_run(label, seq, cfg, o, out.trajectories, derive_seed(cfg.seed, 10 + j), t_c, t_sel, bin,
                               span);
    r.delta_over_sigma = x;
    analyse(r);
    out.runs.push_back(std::move(r));
  }
  {
    const Pulse c = make_shaped_pulse("control", PulseShape::kSech, t_c, Transition::kDeXx, Jones::horizontal(),
                                      2.0 * kPi, 0.7 * out.sigma, out.sigma);
    const auto seq = control_sequence(c, t_c, probe_rabi, out.probe_delay, len);
    out.h_control =
        control_run("H +0.70", seq, cfg, o, out.trajectories, derive_seed(cfg.seed, 99), t_c, t_sel, bin, span);
    out.h_control.delta_over_sigma = 0.7;
    analyse(out.h_control);
  }

  const double norm = std::abs(out.reference.p0_signed);
  double ss = 0.0;
  std::vector<DataPoint> d;
  for (const auto& r : out.runs) {
    out.x.push_back(r.delta_over_sigma);
    out.p0_norm.push_back(r.p0_signed / norm);
    out.expected.push_back(std::sin(kPi - 2.0 * std::atan(r.delta_over_sigma)));
    ss += std::pow(out.p0_norm.back() - out.expected.back(), 2);
    d.push_back({r.delta_over_sigma * out.sigma, r.p0_signed / norm, std::max(1e-3, r.p0_err / norm)});
  }
  out.rms = std::sqrt(ss / out.runs.size());
  VecX init(2);
  init << 1.0, out.sigma;
  out.detuning_fit = lm_fit(detuning_curve_model(), d, init);
  if (out.sequence.pulses.empty()) out.sequence = control_sequence(std::nullopt, t_c, probe_rabi, out.probe_delay, len);
  return out;
}

inline std::string control_csv(const ControlPreset& r) {
  std::ostringstream os;
  os << "run,delta_over_sigma,t_ns,n_plus,n_minus,dcp,dcp_err\n";
  auto put = [&](const ControlRun& c) {
    for (std::size_t i = 0; i < c.t.size(); ++i)
      os << '"' << c.label << "\"," << fmt_num(c.delta_over_sigma) << ',' << fmt_num(c.t[i]) << ',' << c.n_plus[i]
         << ',' << c.n_minus[i] << ',' << fmt_num(c.dcp[i]) << ',' << fmt_num(c.dcp_err[i]) << '\n';
  };
  put(r.reference);
  for (const auto& c : r.runs) put(c);
  put(r.h_control);
  return os.str();
}

// ===========================================================================
// Dispatch

struct PresetOutput {
  std::string name;
  std::string csv;
  std::string csv_schema;
  json fit;
  json summary;
  std::string dexseq;
  int trajectories = 0;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> n = {"fig-saturation",   "fig-rabi",
                                             "fig-lifetime",     "fig-coherence-cw",
                                             "fig-coherence-pulsed", "fig-control"};
  return n;
}

inline PresetOutput run_preset(const std::string& name, const PresetConfig& cfg) {
  PresetOutput out;
  out.name = name;
  out.csv_schema = name + "/1";
  auto provenance = [&](const PulseSequence& s, int n, int reps = 1) {
    SystemParams p = cfg.params;
    p.efficiency = cfg.efficiency;  // the preset detector, so the file reproduces it
    SeqDocument d = document_of(s, p, cfg.seed, n);
    (void)reps;
    return serialize(d);
  };
  if (name == "fig-saturation") {
    const auto r = run_fig_saturation(cfg);
    out.csv = saturation_csv(r);
    out.fit = {{"model", "rate_equation"},
               {"de_argmax_power", r.de_argmax_power},
               {"de_half_power", r.de_half_power},
               {"be_half_power", r.be_half_power},
               {"power_ratio", r.power_ratio},
               {"expected_ratio", r.expected_ratio},
               {"intensity_ratio", r.intensity_ratio}};
    out.summary = out.fit;
    out.dexseq = serialize(document_of(PulseSequence{}, cfg.params, cfg.seed, std::nullopt));
  } else if (name == "fig-rabi") {
    const auto r = run_fig_rabi(cfg);
    out.csv = rabi_csv(r);
    out.fit = fit_json(r.fit, rabi_curve_model());
    out.summary = {{"theta_max1", r.theta_max1},     {"theta_min1", r.theta_min1},
                   {"carry_rep_period", r.carry_rep_period}, {"carry_fraction", r.carry_fraction},
                   {"contrast", r.contrast}};
    out.fit["summary"] = out.summary;
    out.dexseq = provenance(r.sequence, 0);
  } else if (name == "fig-lifetime") {
    const auto r = run_fig_lifetime(cfg);
    out.trajectories = r.trajectories;
    out.csv = lifetime_csv(r);
    out.fit = fit_json(r.fit, exp_decay_model());
    out.summary = {{"tau", r.tau}, {"tau_err", r.tau_err}, {"delays", r.delays}, {"counts", r.counts}};
    out.dexseq = provenance(r.sequence, r.trajectories);
  } else if (name == "fig-coherence-cw") {
    const auto r = run_fig_coherence_cw(cfg);
    out.trajectories = r.trajectories;
    out.csv = coherence_cw_csv(r);
    out.fit = fit_json(r.fit, decaying_sinusoid_model());
    out.summary = {{"period", r.period}, {"period_err", r.period_err}, {"t_pd", r.t_pd},     {"p0", r.p0},
                   {"peak_dcp", r.peak_dcp}, {"pairs", r.pairs},       {"probe_rabi", r.probe_rabi}};
    out.fit["summary"] = out.summary;
    out.dexseq = provenance(r.sequence, r.trajectories);
  } else if (name == "fig-coherence-pulsed") {
    const auto r = run_fig_coherence_pulsed(cfg);
    out.trajectories = r.trajectories;
    out.csv = coherence_pulsed_csv(r);
    out.fit = fit_json(r.fit, decaying_sinusoid_model());
    out.summary = {{"t_pd", r.t_pd},         {"t_pd_err", r.t_pd_err},         {"alias_period", r.alias_period},
                   {"maxima", r.maxima},     {"expected_maxima", r.expected_maxima}, {"pattern_ok", r.pattern_ok},
                   {"rep_period", r.rep_period}, {"repetitions", r.repetitions}, {"probe_area", r.probe_area}};
    out.fit["summary"] = out.summary;
    out.dexseq = provenance(r.sequence, r.trajectories);
  } else if (name == "fig-control") {
    const auto r = run_fig_control(cfg);
    out.trajectories = r.trajectories;
    out.csv = control_csv(r);
    json runs = json::array();
    auto run_json = [&](const ControlRun& c) {
      return json{{"label", c.label},           {"delta_over_sigma", c.delta_over_sigma},
                  {"p0_signed", c.p0_signed},   {"p0_err", c.p0_err},
                  {"t_first_max", number_json(c.t_first_max)}, {"t_spin_max", number_json(c.t_spin_max)},
                  {"clicks", c.clicks}};
    };
    for (const auto& c : r.runs) runs.push_back(run_json(c));
    out.fit = fit_json(r.detuning_fit, detuning_curve_model());
    out.summary = {{"period", r.period},        {"t_ref", r.t_ref},         {"reference", run_json(r.reference)},
                   {"runs", runs},              {"h_control", run_json(r.h_control)},
                   {"delta_over_sigma", r.x},   {"p0_normalized", r.p0_norm}, {"expected", r.expected},
                   {"rms", r.rms}};
    out.fit["summary"] = out.summary;
    out.dexseq = provenance(r.sequence, r.trajectories);
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  return out;
}

}  // namespace dexsim
