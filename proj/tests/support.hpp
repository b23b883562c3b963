#pragma once

// Generators and harnesses shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dexsim.hpp"

namespace dexsim::testing {

// ---------------------------------------------------------------------------
// Random documents

// Values on a decimal grid so that they survive shortest-form printing.
inline double grid(Rng& r, double lo, double hi, double step) {
  const auto n = static_cast<long long>(std::floor((hi - lo) / step));
  return lo + step * static_cast<double>(static_cast<long long>(r.uniform() * (n + 1)));
}

inline SeqDocument random_document(Rng& r) {
  SeqDocument d;
  const NamedPolarization pols[] = {NamedPolarization::kH, NamedPolarization::kV, NamedPolarization::kSigmaPlus,
                                    NamedPolarization::kSigmaMinus};
  const int n = static_cast<int>(r.uniform() * 6);
  double cursor = 0.5;
  for (int i = 0; i < n; ++i) {
    Pulse p;
    p.name = "p" + std::to_string(i);
    p.transition = r.bernoulli(0.5) ? Transition::kVacDe : Transition::kDeXx;
    p.polarization = jones_of(pols[static_cast<int>(r.uniform() * 4)]);
    p.detuning = grid(r, -300.0, 300.0, 0.5);
    const double u = r.uniform();
    if (u < 0.25) {
      p.shape = r.bernoulli(0.5) ? PulseShape::kSech : PulseShape::kGaussian;
      p.bandwidth_sigma = grid(r, 20.0, 400.0, 1.0);
      p.duration = duration_from_bandwidth(p.shape, p.bandwidth_sigma);
      p.t0 = cursor + grid(r, 0.0, 5.0, 0.01) + 10.0 * p.duration;
      p.area = r.bernoulli(0.5) ? grid(r, 1.0, 4.0, 1.0) * kPi : grid(r, 0.1, 9.0, 0.001);
    } else if (u < 0.5) {
      p.shape = PulseShape::kCw;
      p.t0 = cursor + grid(r, 0.0, 5.0, 0.01);
      p.duration = grid(r, 1.0, 300.0, 0.25);
      p.peak_rabi = grid(r, 0.01, 3.0, 0.01);
    } else {
      p.shape = PulseShape::kSquare;
      p.t0 = cursor + grid(r, 0.0, 5.0, 0.01);
      p.duration = grid(r, 0.005, 60.0, 0.005);
      p.area = r.bernoulli(0.5) ? grid(r, 1.0, 4.0, 1.0) * kPi : grid(r, 0.1, 9.0, 0.001);
    }
    cursor = p.window_end();
    d.pulses.push_back(p);
  }
  d.t_end = std::ceil(cursor) + grid(r, 0.0, 50.0, 0.5);
  const double g = r.uniform();
  if (g < 0.25) d.rep_period = *d.t_end + grid(r, 0.0, 100.0, 0.5);
  else if (g < 0.5) {
    const double max_rate = std::floor(1000.0 / *d.t_end * 10.0) / 10.0;
    if (max_rate >= 0.5) d.rep_rate_mhz = grid(r, 0.5, max_rate, 0.1);
  }
  if (r.bernoulli(0.5)) d.seed = static_cast<std::uint64_t>(r.uniform() * 1e9);
  if (r.bernoulli(0.5)) d.trajectories = 1 + static_cast<int>(r.uniform() * 1e5);
  for (const auto& [k, dim] : seq_detail::param_keys()) {
    if (!r.bernoulli(0.3)) continue;
    if (k == "efficiency") d.overrides[k] = grid(r, 0.001, 1.0, 0.001);
    else if (k == "h_planck") d.overrides[k] = grid(r, 4.0, 4.2, 0.0001);
    else if (k == "irf_fwhm") d.overrides[k] = grid(r, 0.0, 2.0, 0.01);
    else if (k == "t_larmor_xx" && r.bernoulli(0.3)) d.overrides[k] = kInf;
    else d.overrides[k] = grid(r, 0.01, 5000.0, 0.01);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Mutations for invalid documents

inline std::string mutate(const std::string& text, Rng& r) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(r.uniform() * n); };
  static const char* junk[] = {"=", "{", "}", "@", "pulse", "ns", "MHz", "-", "1e999", "nan", "\"", ";", "area",
                               "t0 = 1 ns", "duration = -3 ns", "shape = triangle", "polarization = X",
                               "frobnicate = 2", "format = 9", "rep_rate = 10 ns", "delta_de = 1 ueV"};
  const int kind = static_cast<int>(r.uniform() * 8);
  switch (kind) {
    case 0:  // drop a random line
      if (!lines.empty()) lines.erase(lines.begin() + pick(lines.size()));
      break;
    case 1:  // insert a junk line
      lines.insert(lines.begin() + pick(lines.size() + 1), junk[pick(std::size(junk))]);
      break;
    case 2: {  // replace a value by junk
      if (lines.empty()) break;
      auto& l = lines[pick(lines.size())];
      const auto eq = l.find('=');
      if (eq != std::string::npos) l = l.substr(0, eq + 1) + " " + junk[pick(std::size(junk))];
      else l += junk[pick(std::size(junk))];
      break;
    }
    case 3: {  // truncate
      std::string all;
      for (const auto& l : lines) all += l + "\n";
      return all.substr(0, pick(all.size()));
    }
    case 4: {  // flip a character
      std::string all;
      for (const auto& l : lines) all += l + "\n";
      if (!all.empty()) all[pick(all.size())] = "{}=#@x9 \n-."[pick(11)];
      return all;
    }
    case 5:  // duplicate a line
      if (!lines.empty()) {
        const auto i = pick(lines.size());
        lines.insert(lines.begin() + i, lines[i]);
      }
      break;
    case 6:  // wrong unit on a time
      for (auto& l : lines)
        if (l.find(" ns") != std::string::npos && r.bernoulli(0.5)) {
          l.replace(l.find(" ns"), 3, r.bernoulli(0.5) ? " ueV" : " MHz");
          break;
        }
      break;
    default:  // append garbage bytes
      lines.push_back(std::string(1 + pick(8), static_cast<char>(1 + pick(126))));
      break;
  }
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

inline int line_count(const std::string& s) { return 1 + static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// ---------------------------------------------------------------------------
// Fitting harnesses

struct ModelCase {
  ModelSpec model;
  VecX truth;
  std::vector<double> x;
  double noise;  // absolute 1-sigma
  // Relative spread of the starting point. The sinusoid period is kept within 1%:
  // over ~10 periods a larger error slips the phase into another chi2 basin.
  std::vector<double> spread;
};

inline std::vector<ModelCase> measurement_scale_cases() {
  std::vector<ModelCase> out;
  {
    ModelCase c{exp_decay_model(), VecX(2), {10, 50, 150, 400, 1000, 1500, 2200, 3500}, 0.0, {}};
    c.truth << 2300.0, 1100.0;
    c.noise = 0.02 * 2300.0;
    out.push_back(c);
  }
  {
    ModelCase c{decaying_sinusoid_model(), VecX(4), {}, 0.0, {}};
    c.truth << 0.6, 3.09, 0.5, 100.0;
    for (int i = 0; i < 300; ++i) c.x.push_back(0.1 * i + 0.05);
    c.noise = 0.02 * 0.6;
    c.spread = {0.05, 0.01, 0.05, 0.05};
    out.push_back(c);
  }
  {
    ModelCase c{rabi_curve_model(), VecX(3), {}, 0.0, {}};
    c.truth << 1.0, 1.0, 20.0;
    for (int i = 0; i <= 80; ++i) c.x.push_back(16.0 * i / 80.0);
    c.noise = 0.02;
    out.push_back(c);
  }
  {
    ModelCase c{detuning_curve_model(), VecX(2), {-200, -100, -70, 0, 70, 100, 200}, 0.0, {}};
    c.truth << 0.6, 100.0;
    c.noise = 0.02 * 0.6;
    out.push_back(c);
  }
  return out;
}

struct RoundTripStats {
  int trials = 0;
  int covered = 0;  // every parameter within 3 sigma
  int failures = 0; // fit threw
};

inline double spread_of(const ModelCase& c, int j) { return c.spread.empty() ? 0.05 : c.spread[j]; }

inline RoundTripStats fit_round_trips(const ModelCase& c, int trials, std::uint64_t seed) {
  RoundTripStats s;
  for (int k = 0; k < trials; ++k) {
    Rng r(derive_seed(seed, k));
    std::vector<DataPoint> d;
    for (double x : c.x) d.push_back({x, c.model.eval(c.truth, x) + c.noise * r.normal(), c.noise});
    VecX init = c.truth;
    for (int j = 0; j < init.size(); ++j) init(j) *= 1.0 + spread_of(c, j) * (2.0 * r.uniform() - 1.0);
    ++s.trials;
    try {
      const FitResult f = lm_fit(c.model, d, init);
      bool ok = true;
      for (int j = 0; j < c.model.arity; ++j)
        ok = ok && std::abs(f.params(j) - c.truth(j)) <= 3.0 * f.stderr_of(j);
      s.covered += ok;
    } catch (const FitError&) {
      ++s.failures;
    }
  }
  return s;
}

/// Worst relative error of the analytic Jacobian against finite differences.
inline double jacobian_error(const ModelSpec& m, const VecX& p, double x) {
  const VecX a = m.jacobian(p, x);
  double worst = 0.0;
  const double scale = a.cwiseAbs().maxCoeff();
  for (int j = 0; j < m.arity; ++j) {
    const double h = 1e-4 * std::max(1e-3, std::abs(p(j)));
    auto at = [&](double k) {
      VecX q = p;
      q(j) += k * h;
      return m.eval(q, x);
    };
    // five-point stencil, O(h^4)
    const double fd = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
    // differences below the stencil roundoff are noise
    const double noise = 1e-14 * (1.0 + std::abs(m.eval(p, x))) / h;
    if (std::abs(a(j) - fd) <= noise) continue;
    const double den = std::max({std::abs(a(j)), std::abs(fd), 1e-6 * scale, 1e-300});
    worst = std::max(worst, std::abs(a(j) - fd) / den);
  }
  return worst;
}

inline VecX random_params(const ModelCase& c, Rng& r) {
  VecX p = c.truth;
  for (int j = 0; j < p.size(); ++j) p(j) *= 0.5 + r.uniform();
  return p;
}

// ---------------------------------------------------------------------------
// Oracle equivalence

/// Staircase version of a shaped pulse: n flat slices over +-span sech widths,
/// each carrying the exact area under its part of the envelope.
inline std::vector<Pulse> sliced(const Pulse& p, int n, double span_tau) {
  const double tau = p.shape == PulseShape::kSech ? p.sech_tau() : p.duration;
  const double a = p.t0 - span_tau * tau, b = p.t0 + span_tau * tau;
  std::vector<Pulse> out;
  for (int i = 0; i < n; ++i) {
    const double lo = a + (b - a) * i / n, hi = a + (b - a) * (i + 1) / n;
    double area = 0.0;
    const int q = 64;
    for (int k = 0; k < q; ++k) area += envelope_unclipped(p, lo + (hi - lo) * (k + 0.5) / q) * (hi - lo) / q;
    Pulse s = make_square_pulse(p.name + "_" + std::to_string(i), lo, hi - lo, p.transition, p.polarization, area,
                                p.detuning);
    out.push_back(s);
  }
  return out;
}

struct OracleCase {
  std::string name;
  PulseSequence seq;
  Vec7 initial;
  double t_end = 0.0;
  double dt = 0.05;
};

inline std::vector<OracleCase> oracle_cases() {
  std::vector<OracleCase> out;
  {
    OracleCase c{"free_decay", {}, basis_ket(BasisState::kXxP3), 8.0, 0.02};
    c.seq.t_end = 8.0;
    out.push_back(c);
  }
  {
    OracleCase c{"init_probe", {}, basis_ket(BasisState::kVac), 70.0, 0.05};
    c.seq.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
    c.seq.pulses.push_back(make_square_pulse("probe", 61.0, 0.02, Transition::kDeXx, Jones::sigma_plus(), kPi));
    c.seq.t_end = 70.0;
    out.push_back(c);
  }
  {
    OracleCase c{"init_control_probe", {}, basis_ket(BasisState::kVac), 75.0, 0.05};
    c.seq.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
    const Pulse ctrl = make_shaped_pulse("ctrl", PulseShape::kSech, 62.0, Transition::kDeXx, Jones::sigma_plus(),
                                         2.0 * kPi, 70.0, 100.0);
    for (const auto& s : sliced(ctrl, 60, 8.0)) c.seq.pulses.push_back(s);
    c.seq.pulses.push_back(make_cw_pulse("probe", 62.2, 12.8, Transition::kDeXx, Jones::horizontal(), 0.6));
    c.seq.t_end = 75.0;
    out.push_back(c);
  }
  return out;
}

struct OracleReport {
  std::string name;
  double worst_mc = 0.0;        // max |MC - Lindblad| / max(0.02, 3 sigma)
  double worst_oracle = 0.0;    // max |Lindblad - oracle| / max(0.02, 3 sigma)
  double max_lindblad_oracle = 0.0;
  std::string invariant_error;  // empty when every sample passed
  int samples = 0;
};

inline OracleReport compare_with_oracle(const OracleCase& c, int trajectories, std::uint64_t seed) {
  OracleReport rep;
  rep.name = c.name;
  const SystemParams p = default_params();
  LindbladOptions lo;
  lo.sample_dt = c.dt;
  lo.method = LindbladMethod::kAdaptiveRK;
  const auto lres = evolve_lindblad(QuantumState::from_ket(c.initial), c.seq, p, c.t_end, lo);
  const auto& tr = lres.trace;
  const auto orc = oracle_evolve(QuantumState::from_ket(c.initial), c.seq, p, tr.t);
  TrajectoryOptions to;
  to.initial_state = c.initial;
  to.sample_dt = c.dt;
  to.t_stop = c.t_end;
  const auto ens = run_ensemble(TrajectoryEngine(c.seq, p, to), trajectories, seed);
  const auto& mc = ens.trace;
  if (mc.size() != tr.size()) {
    rep.invariant_error = "sample grids differ";
    return rep;
  }
  rep.samples = static_cast<int>(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double tol = std::max(0.02, 3.0 * ens.pop_stderr_max[k]);
    for (int i = 0; i < kDim; ++i) {
      rep.worst_mc = std::max(rep.worst_mc, std::abs(mc.pop[k][i] - tr.pop[k][i]) / tol);
      const double dl = std::abs(orc[k].rho(i, i).real() - tr.pop[k][i]);
      rep.worst_oracle = std::max(rep.worst_oracle, dl / tol);
      rep.max_lindblad_oracle = std::max(rep.max_lindblad_oracle, dl);
    }
    if (rep.invariant_error.empty()) {
      std::string why = check_density_matrix(orc[k].rho);
      if (why.empty()) {
        Mat7 m = Mat7::Zero();
        for (int i = 0; i < kDim; ++i) m(i, i) = mc.pop[k][i];
        why = check_density_matrix(m, {1e-9, 1e-9, 1e-9});
      }
      if (!why.empty()) rep.invariant_error = c.name + " t=" + std::to_string(tr.t[k]) + ": " + why;
    }
  }
  return rep;
}

}  // namespace dexsim::testing
