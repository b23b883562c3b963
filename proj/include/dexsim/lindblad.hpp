#pragma once

// Master-equation propagation of the 7-level density matrix.

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "dexsim/ode.hpp"
#include "dexsim/physics.hpp"
#include "dexsim/pulses.hpp"

namespace dexsim {

struct QuantumState {
  Mat7 rho = Mat7::Zero();
  double t = 0.0;

  static QuantumState from_ket(const Vec7& psi, double t = 0.0) {
    const Vec7 n = psi / psi.norm();
    return {n * n.adjoint(), t};
  }
  static QuantumState basis(BasisState s, double t = 0.0) { return from_ket(basis_ket(s), t); }

  double population(int i) const { return rho(i, i).real(); }
  double trace() const { return rho.trace().real(); }
};

struct InvariantTolerance {
  double hermiticity = 1e-9;
  double trace = 1e-7;
  double positivity = 1e-7;
};

/// Empty string if rho is a valid density matrix, else a description.
inline std::string check_density_matrix(const Mat7& rho, const InvariantTolerance& tol = {}) {
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (!(herm < tol.hermiticity)) return "hermiticity violated: " + std::to_string(herm);
  const double tr = rho.trace().real();
  if (!(std::abs(tr - 1.0) <= tol.trace)) return "trace violated: " + std::to_string(tr);
  const Mat7 h = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat7> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo >= -tol.positivity)) return "positivity violated: " + std::to_string(lo);
  return {};
}

/// DE Bloch vector with |a> as north pole, normalized to the DE population.
/// x = p(+2) - p(-2) (circular polarization), y = 2 Im <s|rho|a>, z = p(a) - p(s).
inline std::array<double, 3> bloch_vector(const Mat7& rho) {
  const double p_de = rho(1, 1).real() + rho(2, 2).real();
  if (p_de < 1e-14) return {0.0, 0.0, 0.0};
  const Vec7 a = ket_a(), s = ket_s();
  const cplx rsa = (s.adjoint() * rho * a)(0, 0);
  const double pa = (a.adjoint() * rho * a)(0, 0).real();
  const double ps = (s.adjoint() * rho * s)(0, 0).real();
  return {2.0 * rsa.real() / p_de, 2.0 * rsa.imag() / p_de, (pa - ps) / p_de};
}

// ---------------------------------------------------------------------------

/// Observable samples on a uniform grid.
struct StateTrace {
  std::vector<double> t;
  std::vector<std::array<double, kDim>> pop;
  std::vector<std::array<double, 3>> bloch;
  std::vector<std::string> emission_names;
  std::vector<std::vector<double>> emission;  // [sample][radiative channel], photons/ns

  std::size_t size() const { return t.size(); }

  void push(double time, const Mat7& rho, const std::vector<CollapseChannel>& ch) {
    t.push_back(time);
    std::array<double, kDim> p{};
    for (int i = 0; i < kDim; ++i) p[i] = rho(i, i).real();
    pop.push_back(p);
    bloch.push_back(bloch_vector(rho));
    if (emission_names.empty())
      for (const auto& c : ch)
        if (c.radiative()) emission_names.push_back(c.name);
    std::vector<double> e;
    for (const auto& c : ch)
      if (c.radiative()) e.push_back(c.rate * (c.op.adjoint() * c.op * rho).trace().real());
    emission.push_back(std::move(e));
  }
};

inline constexpr const char* kStateTraceHeader =
    "t_ns,pop_vac,pop_p2,pop_m2,pop_p2x,pop_m2x,pop_p3,pop_m3,bloch_x,bloch_y,bloch_z";

inline void write_trace_csv(std::ostream& os, const StateTrace& tr) {
  os << kStateTraceHeader << '\n';
  char buf[64];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    os << buf;
  };
  for (std::size_t k = 0; k < tr.size(); ++k) {
    put(tr.t[k]);
    for (double p : tr.pop[k]) os << ',', put(p);
    for (double b : tr.bloch[k]) os << ',', put(b);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Superoperator form (column stacking: vec(A X B) = (B^T (x) A) vec(X)).

using Super = Eigen::Matrix<cplx, kDim * kDim, kDim * kDim>;
using SuperVec = Eigen::Matrix<cplx, kDim * kDim, 1>;

inline Super kron(const Mat7& a, const Mat7& b) {
  Super k;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) k.block<kDim, kDim>(i * kDim, j * kDim) = a(i, j) * b;
  return k;
}

inline Super lindblad_superoperator(const Mat7& h, const std::vector<CollapseChannel>& channels, double hbar) {
  const Mat7 id = Mat7::Identity();
  Super l = cplx(0.0, -1.0 / hbar) * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& c : channels) {
    if (c.rate == 0.0) continue;
    const Mat7 ldl = c.op.adjoint() * c.op;
    l += c.rate * (kron(c.op.conjugate(), c.op) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
  }
  return l;
}

inline SuperVec vec(const Mat7& m) { return Eigen::Map<const SuperVec>(m.data()); }
inline Mat7 unvec(const SuperVec& v) { return Eigen::Map<const Mat7>(v.data()); }

/// Exact propagation under a constant generator (reference implementation).
inline QuantumState propagate_oracle(const QuantumState& s, const Mat7& h, const std::vector<CollapseChannel>& channels,
                                     double dt, double hbar = kHbar) {
  if (dt == 0.0) return s;
  const Super l = lindblad_superoperator(h, channels, hbar);
  const Super p = (l * dt).exp();
  return {unvec(p * vec(s.rho)), s.t + dt};
}

// ---------------------------------------------------------------------------

enum class LindbladMethod {
  kAdaptiveRK,  // DOPRI5 everywhere
  kHybrid,      // exact exponentials on flat-envelope segments, DOPRI5 elsewhere
};

struct LindbladOptions {
  double tol = 1e-8;
  double sample_dt = 0.05;  // <= 0: no trace
  LindbladMethod method = LindbladMethod::kAdaptiveRK;
  bool check_invariants = true;
  InvariantTolerance invariant_tol{};
};

struct LindbladResult {
  QuantumState state;
  StateTrace trace;
};

namespace detail {

struct Dissipator {
  std::vector<std::pair<Mat7, double>> jumps;  // (L, rate)
  Mat7 k = Mat7::Zero();                       // -1/2 sum rate L^dag L

  explicit Dissipator(const std::vector<CollapseChannel>& ch) {
    for (const auto& c : ch) {
      if (c.rate == 0.0) continue;
      jumps.emplace_back(c.op, c.rate);
      k -= 0.5 * c.rate * c.op.adjoint() * c.op;
    }
  }

  void apply(const Mat7& h, double hbar, const Mat7& rho, Mat7& d) const {
    const Mat7 g = cplx(0.0, -1.0 / hbar) * h + k;
    d.noalias() = g * rho;
    d += d.adjoint().eval();
    for (const auto& [l, r] : jumps) d.noalias() += r * (l * rho * l.adjoint());
  }
};

inline std::vector<double> sample_grid(double t0, double t1, double dt) {
  std::vector<double> g;
  if (!(dt > 0.0)) return g;
  const auto n = static_cast<long>(std::floor((t1 - t0) / dt + 1e-9));
  for (long k = 0; k <= n; ++k) g.push_back(t0 + k * dt);
  return g;
}

inline Mat7 to_frame(const Mat7& rho, const Vec7& u) { return u.asDiagonal() * rho * u.conjugate().asDiagonal(); }
inline Mat7 from_frame(const Mat7& rho, const Vec7& u) { return u.conjugate().asDiagonal() * rho * u.asDiagonal(); }

}  // namespace detail

/// Integrate the master equation from state.t to t1.
inline LindbladResult evolve_lindblad(const QuantumState& state, const PulseSequence& seq, const SystemParams& params,
                                      double t1, const LindbladOptions& opt = {}) {
  if (!(t1 > state.t)) throw ValidationError("evolve_lindblad: t1 must exceed the state time");
  if (!(opt.tol > 0.0)) throw ValidationError("evolve_lindblad: tol must be > 0");
  params.validate();
  seq.validate();

  const auto channels = collapse_channels(params);
  const detail::Dissipator diss(channels);
  const double hbar = params.hbar();
  const auto grid = detail::sample_grid(state.t, t1, opt.sample_dt);
  std::size_t next = 0;

  LindbladResult res;
  auto observe = [&](double t, const Mat7& rho) {
    if (opt.check_invariants) {
      const std::string why = check_density_matrix(rho, opt.invariant_tol);
      if (!why.empty()) throw SimulationError("t = " + std::to_string(t) + " ns: " + why);
    }
    res.trace.push(t, rho, channels);
  };

  OdeOptions ode;
  ode.rtol = opt.tol;
  ode.atol = opt.tol * 1e-2;
  const double cap = params.tau_hh / 5.0;
  auto step_cap = [cap](double, const Mat7& r) {
    const double fast = r(3, 3).real() + r(4, 4).real() + r(5, 5).real() + r(6, 6).real();
    return fast > 1e-6 ? cap : kInf;
  };

  Mat7 rho = state.rho;
  for (const Segment& seg : segment_sequence(seq, params, state.t, t1)) {
    std::vector<double> local;
    while (next < grid.size() && grid[next] <= seg.t_end) {
      // The segment end is sampled by the next segment unless it is the last one.
      if (grid[next] == seg.t_end && seg.t_end < t1) break;
      local.push_back(grid[next++]);
    }
    if (opt.method == LindbladMethod::kHybrid && seg.constant) {
      const Super l = lindblad_superoperator(rotating_hamiltonian(seq, params, seg, seg.t_begin), channels, hbar);
      SuperVec v = vec(detail::to_frame(rho, frame_phases(seg, seg.t_begin, hbar)));
      double t = seg.t_begin;
      Super p_dt;
      double dt_cached = -1.0;
      for (double ts : local) {
        const double dt = ts - t;
        if (dt > 0.0) {
          if (std::abs(dt - dt_cached) > 1e-12 * std::max(1.0, dt)) {
            p_dt = (l * dt).exp();
            dt_cached = dt;
          }
          v = p_dt * v;
          t = ts;
        }
        observe(ts, detail::from_frame(unvec(v), frame_phases(seg, ts, hbar)));
      }
      if (seg.t_end > t) v = (l * (seg.t_end - t)).exp() * v;
      rho = detail::from_frame(unvec(v), frame_phases(seg, seg.t_end, hbar));
    } else {
      auto rhs = [&](double t, const Mat7& r, Mat7& d) {
        diss.apply(segment_hamiltonian(seq, params, seg, t), hbar, r, d);
      };
      rho = integrate_dopri5<Mat7>(rhs, seg.t_begin, rho, seg.t_end, local, observe, ode, step_cap);
    }
    rho = 0.5 * (rho + rho.adjoint());
  }
  res.state = {rho, t1};
  if (opt.check_invariants) {
    const std::string why = check_density_matrix(rho, opt.invariant_tol);
    if (!why.empty()) throw SimulationError("final state: " + why);
  }
  return res;
}

/// Reference propagation of a sequence made only of flat-envelope pulses:
/// one superoperator exponential per segment and sample interval, in each
/// segment's rotating frame. Returns the states at the requested times.
inline std::vector<QuantumState> oracle_evolve(const QuantumState& state, const PulseSequence& seq,
                                               const SystemParams& params, const std::vector<double>& times) {
  for (const auto& p : seq.pulses)
    if (p.shaped()) throw ValidationError("oracle_evolve: shaped pulses are not piecewise constant");
  const auto channels = collapse_channels(params);
  const double hbar = params.hbar();
  std::vector<QuantumState> out;
  if (times.empty()) return out;
  Mat7 rho = state.rho;
  std::size_t k = 0;
  while (k < times.size() && times[k] <= state.t) out.push_back({rho, times[k++]});
  if (k == times.size()) return out;
  for (const Segment& seg : segment_sequence(seq, params, state.t, times.back())) {
    const Mat7 h = rotating_hamiltonian(seq, params, seg, seg.t_begin);
    QuantumState s{detail::to_frame(rho, frame_phases(seg, seg.t_begin, hbar)), seg.t_begin};
    while (k < times.size() && times[k] <= seg.t_end) {
      s = propagate_oracle(s, h, channels, times[k] - s.t, hbar);
      out.push_back({detail::from_frame(s.rho, frame_phases(seg, times[k], hbar)), times[k]});
      ++k;
    }
    if (seg.t_end > s.t) s = propagate_oracle(s, h, channels, seg.t_end - s.t, hbar);
    rho = detail::from_frame(s.rho, frame_phases(seg, seg.t_end, hbar));
  }
  return out;
}

}  // namespace dexsim
